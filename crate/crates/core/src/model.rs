//! Feed-forward ReLU classifiers, sample points and datasets.

use std::path::Path;

use num_traits::Zero;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rational::{parse_rational, Rational};

/// One affine layer. `weights[i][j]` is the weight from input `j` to neuron `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub weights: Vec<Vec<Rational>>,
    pub biases: Vec<Rational>,
}

impl Layer {
    pub fn neurons(&self) -> usize {
        self.weights.len()
    }

    fn apply(&self, input: &[Rational]) -> Vec<Rational> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| {
                row.iter()
                    .zip(input)
                    .fold(b.clone(), |acc, (w, x)| acc + w * x)
            })
            .collect()
    }
}

/// Closed interval `[lower, upper]` bounding one input feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub lower: Rational,
    pub upper: Rational,
}

impl Domain {
    pub fn contains(&self, v: &Rational) -> bool {
        &self.lower <= v && v <= &self.upper
    }
}

/// A ReLU classifier: hidden layers use ReLU, the last layer is linear and
/// its argmax (lowest index on ties) is the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    input_count: usize,
    layers: Vec<Layer>,
    classes: Vec<String>,
    domains: Vec<Domain>,
}

/// A point of the feature space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Point(pub Vec<Rational>);

impl Point {
    pub fn new(values: Vec<Rational>) -> Self {
        Point(values)
    }

    pub fn from_ints(values: &[i64]) -> Self {
        Point(values.iter().map(|&v| crate::rational::int(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }
}

impl Network {
    pub fn new(
        input_count: usize,
        layers: Vec<Layer>,
        classes: Vec<String>,
        domains: Vec<Domain>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension {
                layer: 0,
                message: "network has no layers".into(),
            });
        }
        let mut width = input_count;
        for (k, layer) in layers.iter().enumerate() {
            if layer.weights.is_empty() {
                return Err(Error::Dimension {
                    layer: k,
                    message: "layer has no neurons".into(),
                });
            }
            for (i, row) in layer.weights.iter().enumerate() {
                if row.len() != width {
                    return Err(Error::Dimension {
                        layer: k,
                        message: format!(
                            "neuron {i} has {} weights but the previous layer has {width} outputs",
                            row.len()
                        ),
                    });
                }
            }
            if layer.biases.len() != layer.weights.len() {
                return Err(Error::Dimension {
                    layer: k,
                    message: format!(
                        "{} biases for {} neurons",
                        layer.biases.len(),
                        layer.weights.len()
                    ),
                });
            }
            width = layer.neurons();
        }
        if width != classes.len() {
            return Err(Error::Dimension {
                layer: layers.len() - 1,
                message: format!("{width} outputs but {} classes", classes.len()),
            });
        }
        if classes.len() < 2 {
            return Err(Error::Dimension {
                layer: layers.len() - 1,
                message: "at least two classes are required".into(),
            });
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(Error::Parse(format!("duplicate class name {c:?}")));
            }
        }
        if domains.len() != input_count {
            return Err(Error::Domain {
                feature: domains.len().min(input_count),
                message: format!("{} domains for {input_count} inputs", domains.len()),
            });
        }
        for (i, d) in domains.iter().enumerate() {
            if d.lower > d.upper {
                return Err(Error::Domain {
                    feature: i,
                    message: "lower bound exceeds upper bound".into(),
                });
            }
        }
        Ok(Network {
            input_count,
            layers,
            classes,
            domains,
        })
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("validated non-empty")
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.classes[class]
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    /// Feature variable names, `x1` .. `xm`.
    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.input_count).map(feature_name).collect()
    }

    /// Output-layer activations, computed exactly.
    pub fn forward(&self, p: &Point) -> Result<Vec<Rational>> {
        if p.len() != self.input_count {
            return Err(Error::Length {
                expected: self.input_count,
                got: p.len(),
            });
        }
        let mut values = p.0.clone();
        for layer in self.hidden_layers() {
            values = layer
                .apply(&values)
                .into_iter()
                .map(|y| if y > Rational::zero() { y } else { Rational::zero() })
                .collect();
        }
        Ok(self.output_layer().apply(&values))
    }

    /// Index of the maximal output; ties go to the lowest index.
    pub fn classify(&self, p: &Point) -> Result<usize> {
        let out = self.forward(p)?;
        let mut best = 0;
        for (j, v) in out.iter().enumerate().skip(1) {
            if v > &out[best] {
                best = j;
            }
        }
        Ok(best)
    }

    pub fn in_domain(&self, p: &Point) -> bool {
        p.len() == self.input_count && p.0.iter().zip(&self.domains).all(|(v, d)| d.contains(v))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        network_from_value(&value)
    }

    pub fn to_json(&self) -> Value {
        use crate::rational::format_rational as f;
        let num = |r: &Rational| Value::String(f(r));
        serde_json::json!({
            "inputs": self.input_count,
            "domains": self.domains.iter().map(|d| vec![num(&d.lower), num(&d.upper)]).collect::<Vec<_>>(),
            "classes": self.classes,
            "layers": self.layers.iter().map(|l| serde_json::json!({
                "weights": l.weights.iter().map(|r| r.iter().map(num).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "biases": l.biases.iter().map(num).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn feature_name(index_one_based: usize) -> String {
    format!("x{index_one_based}")
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json_str(&text)
}

fn number(v: &Value, what: &str) -> Result<Rational> {
    match v {
        // arbitrary_precision keeps the literal text, so no float rounding happens
        Value::Number(n) => parse_rational(&n.to_string()),
        Value::String(s) => parse_rational(s),
        other => Err(Error::Parse(format!("{what}: expected a number, got {other}"))),
    }
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::Parse(format!("{what}: expected an array")))
}

fn network_from_value(v: &Value) -> Result<Network> {
    let inputs = v
        .get("inputs")
        .and_then(|n| n.as_u64())
        .ok_or_else(|| Error::Parse("missing non-negative integer field \"inputs\"".into()))?
        as usize;
    let domains = array(
        v.get("domains")
            .ok_or_else(|| Error::Parse("missing field \"domains\"".into()))?,
        "domains",
    )?
    .iter()
    .enumerate()
    .map(|(i, d)| {
        let pair = array(d, "domain")?;
        if pair.len() != 2 {
            return Err(Error::Domain {
                feature: i,
                message: "expected [lower, upper]".into(),
            });
        }
        let bound = |b: &Value| {
            number(b, "domain bound").map_err(|_| Error::Domain {
                feature: i,
                message: format!("bound {b} is not a finite rational"),
            })
        };
        Ok(Domain {
            lower: bound(&pair[0])?,
            upper: bound(&pair[1])?,
        })
    })
    .collect::<Result<Vec<_>>>()?;
    let classes = array(
        v.get("classes")
            .ok_or_else(|| Error::Parse("missing field \"classes\"".into()))?,
        "classes",
    )?
    .iter()
    .map(|c| match c {
        Value::String(s) => Ok(s.clone()),
        other => Err(Error::Parse(format!("class name must be a string, got {other}"))),
    })
    .collect::<Result<Vec<_>>>()?;
    let layers = array(
        v.get("layers")
            .ok_or_else(|| Error::Parse("missing field \"layers\"".into()))?,
        "layers",
    )?
    .iter()
    .enumerate()
    .map(|(k, l)| {
        let weights = array(
            l.get("weights").ok_or_else(|| Error::Dimension {
                layer: k,
                message: "missing weights".into(),
            })?,
            "weights",
        )?
        .iter()
        .map(|row| {
            array(row, "weight row")?
                .iter()
                .map(|w| number(w, "weight"))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
        let biases = match l.get("biases") {
            Some(b) => array(b, "biases")?
                .iter()
                .map(|x| number(x, "bias"))
                .collect::<Result<Vec<_>>>()?,
            None => vec![Rational::zero(); weights.len()],
        };
        Ok(Layer { weights, biases })
    })
    .collect::<Result<Vec<_>>>()?;
    Network::new(inputs, layers, classes, domains)
}

/// Points with optional class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub points: Vec<Point>,
    pub labels: Option<Vec<usize>>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DatasetOptions {
    /// The last column holds a class name.
    pub labels: bool,
}

pub fn load_dataset(path: impl AsRef<Path>, net: &Network, opts: DatasetOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, net, opts)
}

/// Parses dataset CSV. A first row containing a non-numeric feature cell is
/// taken as a header.
pub fn parse_dataset(text: &str, net: &Network, opts: DatasetOptions) -> Result<Dataset> {
    let arity = net.input_count() + usize::from(opts.labels);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut feature_names = net.feature_names();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if record.len() != arity {
            return Err(Error::Parse(format!(
                "row {}: expected {arity} columns, found {}",
                row + 1,
                record.len()
            )));
        }
        let cells: Vec<&str> = record.iter().collect();
        let features = &cells[..net.input_count()];
        if row == 0 && features.iter().any(|c| parse_rational(c).is_err()) {
            feature_names = features.iter().map(|s| s.to_string()).collect();
            continue;
        }
        let values = features
            .iter()
            .map(|c| parse_rational(c))
            .collect::<Result<Vec<_>>>()?;
        points.push(Point(values));
        if opts.labels {
            let label = cells[net.input_count()];
            let idx = net
                .class_index(label)
                .map_err(|_| Error::UnknownLabel {
                    label: label.to_string(),
                    row: row + 1,
                })?;
            labels.push(idx);
        }
    }
    Ok(Dataset {
        points,
        labels: opts.labels.then_some(labels),
        feature_names,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    pub const TOY_JSON: &str = r#"{
        "inputs": 3,
        "domains": [[0, 4], [0, 4], [0, 4]],
        "classes": ["c1", "c2"],
        "layers": [
            {"weights": [[2, 0, 1], [-1, 1, -1]], "biases": [0, 0]},
            {"weights": [[1, -4], [-1, 4]], "biases": [0, 0]}
        ]
    }"#;

    pub fn toy() -> Network {
        Network::from_json_str(TOY_JSON).unwrap()
    }

    #[test]
    fn toy_shape() {
        let net = toy();
        assert_eq!(net.input_count(), 3);
        assert_eq!(net.hidden_layers().len(), 1);
        assert_eq!(net.hidden_layers()[0].neurons(), 2);
        assert_eq!(net.classes().len(), 2);
    }

    #[test]
    fn forward_and_classify() {
        let net = toy();
        let out = net.forward(&Point::from_ints(&[1, 1, 3])).unwrap();
        assert_eq!(out, vec![int(5), int(-5)]);
        assert_eq!(net.classify(&Point::from_ints(&[1, 1, 3])).unwrap(), 0);
        assert_eq!(net.forward(&Point::from_ints(&[0, 0, 0])).unwrap(), vec![int(0), int(0)]);
        assert_eq!(net.classify(&Point::from_ints(&[0, 0, 0])).unwrap(), 0);
        assert_eq!(net.forward(&Point::from_ints(&[0, 4, 0])).unwrap(), vec![int(-16), int(16)]);
        assert_eq!(net.classify(&Point::from_ints(&[0, 4, 0])).unwrap(), 1);
        assert!(matches!(
            net.forward(&Point::from_ints(&[1, 1])),
            Err(Error::Length { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let text = r#"{"inputs": 4, "domains": [[0,1],[0,1],[0,1],[0,1]], "classes": ["a","b"],
            "layers": [{"weights": [[1,2,3],[4,5,6]], "biases": [0,0]},
                       {"weights": [[1,1],[1,1]]}]}"#;
        match Network::from_json_str(text) {
            Err(Error::Dimension { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_weights_and_domain_errors() {
        let text = r#"{"inputs": 1, "domains": [["0", "1"]], "classes": ["a","b"],
            "layers": [{"weights": [["0.1"], [0.3]]}]}"#;
        let net = Network::from_json_str(text).unwrap();
        assert_eq!(net.layers()[0].weights[0][0], ratio(1, 10));
        assert_eq!(net.layers()[0].weights[1][0], ratio(3, 10));
        assert_eq!(net.layers()[0].biases, vec![int(0), int(0)]);

        let inverted = text.replace(r#"["0", "1"]"#, r#"[2, 1]"#);
        assert!(matches!(Network::from_json_str(&inverted), Err(Error::Domain { .. })));
        let infinite = text.replace(r#"["0", "1"]"#, r#"[0, "inf"]"#);
        assert!(matches!(Network::from_json_str(&infinite), Err(Error::Domain { .. })));
        assert!(Network::from_json_str("{").is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = toy();
        let back = Network::from_json_str(&net.to_json().to_string()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn dataset_parsing() {
        let net = toy();
        let d = parse_dataset("1,1,3\n", &net, DatasetOptions::default()).unwrap();
        assert_eq!(d.points, vec![Point::from_ints(&[1, 1, 3])]);
        assert!(d.labels.is_none());
        assert!(parse_dataset("1,1\n", &net, DatasetOptions::default()).is_err());
        let labeled = DatasetOptions { labels: true };
        let d = parse_dataset("a,b,c,label\n1,1,3,c1\n0,4,0,c2\n", &net, labeled).unwrap();
        assert_eq!(d.labels, Some(vec![0, 1]));
        assert_eq!(d.feature_names, vec!["a", "b", "c"]);
        assert!(matches!(
            parse_dataset("1,1,3,c9\n", &net, labeled),
            Err(Error::UnknownLabel { .. })
        ));
    }
}
