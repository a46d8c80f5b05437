//! Test support: the three-feature toy network, a seeded generator of small
//! random networks, and an exact forward-pass oracle that shares no code
//! with the library.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use spex_core::{Network, Point};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

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

/// A network in quarter units: weight `k` means `k/4`.
#[derive(Debug, Clone)]
pub struct RawNet {
    pub inputs: usize,
    /// `layers[k] = (weights[neuron][input], biases[neuron])`
    pub layers: Vec<(Vec<Vec<i64>>, Vec<i64>)>,
    pub classes: usize,
    pub lower: i64,
    pub upper: i64,
}

impl RawNet {
    pub fn toy() -> RawNet {
        RawNet {
            inputs: 3,
            layers: vec![
                (vec![vec![8, 0, 4], vec![-4, 4, -4]], vec![0, 0]),
                (vec![vec![4, -16], vec![-4, 16]], vec![0, 0]),
            ],
            classes: 2,
            lower: 0,
            upper: 4,
        }
    }

    pub fn to_json(&self) -> String {
        let quarter = |k: &i64| format!("\"{}\"", *k as f64 / 4.0);
        let layers: Vec<String> = self
            .layers
            .iter()
            .map(|(w, b)| {
                let rows: Vec<String> = w
                    .iter()
                    .map(|r| format!("[{}]", r.iter().map(quarter).collect::<Vec<_>>().join(",")))
                    .collect();
                let biases: Vec<String> = b.iter().map(quarter).collect();
                format!("{{\"weights\": [{}], \"biases\": [{}]}}", rows.join(","), biases.join(","))
            })
            .collect();
        let domains: Vec<String> = (0..self.inputs).map(|_| format!("[{}, {}]", self.lower, self.upper)).collect();
        let classes: Vec<String> = (0..self.classes).map(|c| format!("\"k{c}\"")).collect();
        format!(
            "{{\"inputs\": {}, \"domains\": [{}], \"classes\": [{}], \"layers\": [{}]}}",
            self.inputs,
            domains.join(","),
            classes.join(","),
            layers.join(",")
        )
    }

    pub fn network(&self) -> Network {
        Network::from_json_str(&self.to_json()).unwrap()
    }

    /// Exact output vector.
    pub fn forward(&self, x: &[Q]) -> Vec<Q> {
        let mut v: Vec<Q> = x.to_vec();
        let depth = self.layers.len();
        for (k, (w, b)) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(w.len());
            for (row, bias) in w.iter().zip(b) {
                let mut acc = q(*bias, 4);
                for (wij, xj) in row.iter().zip(&v) {
                    acc += q(*wij, 4) * xj;
                }
                if k + 1 < depth && acc.is_negative() {
                    acc = Q::zero();
                }
                next.push(acc);
            }
            v = next;
        }
        v
    }

    /// First index of the maximal output.
    pub fn classify(&self, x: &[Q]) -> usize {
        let out = self.forward(x);
        let mut best = 0;
        for (i, o) in out.iter().enumerate() {
            if o > &out[best] {
                best = i;
            }
        }
        best
    }

    /// All points of the grid with the given step over the domain box.
    pub fn grid(&self, step: &Q) -> Vec<Vec<Q>> {
        let mut axis = Vec::new();
        let mut v = q(self.lower, 1);
        while v <= q(self.upper, 1) {
            axis.push(v.clone());
            v += step;
        }
        let mut points: Vec<Vec<Q>> = vec![Vec::new()];
        for _ in 0..self.inputs {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |a| {
                        let mut p = p.clone();
                        p.push(a.clone());
                        p
                    })
                })
                .collect();
        }
        points
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn nonzero(rng: &mut ChaCha8Rng, bound: i64) -> i64 {
    loop {
        let k = rng.gen_range(-bound..=bound);
        if k != 0 {
            return k;
        }
    }
}

/// 2–4 features over `[0, 4]`, one or two hidden layers of 2–6 neurons,
/// 2–3 classes, nonzero weights in `[-2, 2]` and biases in `[-1, 1]`, all
/// multiples of 1/4.
pub fn random_net(rng: &mut ChaCha8Rng) -> RawNet {
    let inputs = rng.gen_range(2..=4);
    let hidden = rng.gen_range(1..=2);
    let classes = rng.gen_range(2..=3);
    let mut widths = vec![inputs];
    for _ in 0..hidden {
        widths.push(rng.gen_range(2..=6));
    }
    widths.push(classes);
    let layers = widths
        .windows(2)
        .map(|w| {
            let weights = (0..w[1]).map(|_| (0..w[0]).map(|_| nonzero(rng, 8)).collect()).collect();
            let biases = (0..w[1]).map(|_| rng.gen_range(-4..=4)).collect();
            (weights, biases)
        })
        .collect();
    RawNet {
        inputs,
        layers,
        classes,
        lower: 0,
        upper: 4,
    }
}

/// A point on the 1/4 grid of the domain box.
pub fn random_sample(rng: &mut ChaCha8Rng, net: &RawNet) -> Vec<Q> {
    (0..net.inputs)
        .map(|_| q(rng.gen_range(net.lower * 4..=net.upper * 4), 4))
        .collect()
}

pub fn point(values: &[Q]) -> Point {
    Point::new(values.to_vec())
}
