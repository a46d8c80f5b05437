//! Linear-arithmetic encoding of a network, its domains and the negated
//! classification, plus the sample formula and its Capture partition.

use std::collections::BTreeSet;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::formula::{Formula, LinearTerm, Rel};
use crate::model::{Network, Point};
use crate::rational::Rational;

/// Pre-activation variable of neuron `i` in layer `k` (both 1-based).
pub fn pre_activation(k: usize, i: usize) -> String {
    format!("y_{k}_{i}")
}

/// Post-ReLU variable of hidden neuron `i` in layer `k`.
pub fn activation(k: usize, i: usize) -> String {
    format!("x_{k}_{i}")
}

/// Network equations and ReLU case splits.
pub fn encode_network(net: &Network) -> Formula {
    let features = net.feature_names();
    let depth = net.layers().len();
    let mut parts = Vec::new();
    for (k0, layer) in net.layers().iter().enumerate() {
        let k = k0 + 1;
        let input = |j: usize| -> String {
            if k == 1 {
                features[j].clone()
            } else {
                activation(k - 1, j + 1)
            }
        };
        for (i0, (row, bias)) in layer.weights.iter().zip(&layer.biases).enumerate() {
            let i = i0 + 1;
            let y = pre_activation(k, i);
            let mut term = LinearTerm::var(&y);
            for (j, w) in row.iter().enumerate() {
                term.add(input(j), &-w);
            }
            parts.push(Formula::atom(term, Rel::Eq, bias.clone()));
            if k < depth {
                let x = activation(k, i);
                let inactive = Formula::and([
                    Formula::var_cmp(&y, Rel::Le, Rational::zero()),
                    Formula::var_cmp(&x, Rel::Eq, Rational::zero()),
                ]);
                let active = Formula::and([
                    Formula::var_cmp(&y, Rel::Ge, Rational::zero()),
                    Formula::atom(
                        LinearTerm::from_pairs([(x, Rational::one()), (y, -Rational::one())]),
                        Rel::Eq,
                        Rational::zero(),
                    ),
                ]);
                parts.push(Formula::Or(vec![inactive, active]));
            }
        }
    }
    Formula::and(parts)
}

/// Box constraints `L_i <= x_i <= U_i` on every feature.
pub fn encode_domains(net: &Network) -> Formula {
    Formula::and(
        net.feature_names()
            .iter()
            .zip(net.domains())
            .flat_map(|(x, d)| {
                [
                    Formula::var_cmp(x, Rel::Ge, d.lower.clone()),
                    Formula::var_cmp(x, Rel::Le, d.upper.clone()),
                ]
            }),
    )
}

/// "The network does not pick `class`": some lower-indexed output reaches it or
/// some higher-indexed output exceeds it.
pub fn encode_not_class(net: &Network, class: usize) -> Result<Formula> {
    let n = net.classes().len();
    if class >= n {
        return Err(Error::UnknownClass(class.to_string()));
    }
    let depth = net.layers().len();
    let target = pre_activation(depth, class + 1);
    Ok(Formula::or((0..n).filter(|&j| j != class).map(|j| {
        let term = LinearTerm::from_pairs([
            (pre_activation(depth, j + 1), Rational::one()),
            (target.clone(), -Rational::one()),
        ]);
        let rel = if j < class { Rel::Ge } else { Rel::Gt };
        Formula::atom(term, rel, Rational::zero())
    })))
}

/// The B-part: network ∧ domains ∧ ¬class.
pub fn build_psi(net: &Network, class: usize) -> Result<Formula> {
    Ok(Formula::and([
        encode_network(net),
        encode_domains(net),
        encode_not_class(net, class)?,
    ]))
}

pub fn build_psi_named(net: &Network, class: &str) -> Result<Formula> {
    build_psi(net, net.class_index(class)?)
}

/// `x_1 = s_1 ∧ ... ∧ x_m = s_m`
pub fn encode_sample(s: &Point, names: &[String]) -> Result<Formula> {
    if s.is_empty() || s.len() != names.len() {
        return Err(Error::Length {
            expected: names.len().max(1),
            got: s.len(),
        });
    }
    Ok(Formula::and(
        names
            .iter()
            .zip(s.values())
            .map(|(x, v)| Formula::var_cmp(x, Rel::Eq, v.clone())),
    ))
}

/// Splits a per-feature conjunction into the conjuncts over `selected`
/// features and the rest.
pub fn partition_sample(
    sample: &Formula,
    selected: &BTreeSet<String>,
    names: &[String],
) -> Result<(Formula, Formula)> {
    if selected.is_empty() {
        return Err(Error::Partition("no features selected".into()));
    }
    if let Some(unknown) = selected.iter().find(|s| !names.contains(s)) {
        return Err(Error::Partition(format!("unknown feature {unknown:?}")));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for c in sample.conjuncts() {
        let vars = c.vars();
        if vars.len() > 1 {
            return Err(Error::Partition(format!(
                "conjunct {c} spans several features"
            )));
        }
        if vars.iter().any(|v| selected.contains(v)) {
            a.push(c);
        } else {
            b.push(c);
        }
    }
    Ok((Formula::and(a), Formula::and(b)))
}

/// An interpolation query: labeled A-conjuncts against a B-part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionedSystem {
    /// A-part conjuncts; a conjunct's label is its index.
    pub a_part: Vec<Formula>,
    pub b_part: Formula,
    pub target_class: Option<usize>,
}

impl PartitionedSystem {
    pub fn new(a: &Formula, b: Formula) -> Self {
        PartitionedSystem {
            a_part: a.conjuncts(),
            b_part: b,
            target_class: None,
        }
    }

    pub fn from_conjuncts(a_part: Vec<Formula>, b: Formula) -> Self {
        PartitionedSystem {
            a_part,
            b_part: b,
            target_class: None,
        }
    }

    /// A-part is a sample or explanation, B-part is the encoding for `class`.
    pub fn for_class(net: &Network, a: &Formula, class: usize) -> Result<Self> {
        Ok(PartitionedSystem {
            a_part: a.conjuncts(),
            b_part: build_psi(net, class)?,
            target_class: Some(class),
        })
    }

    pub fn a_formula(&self) -> Formula {
        Formula::and(self.a_part.iter().cloned())
    }

    pub fn a_vars(&self) -> BTreeSet<String> {
        self.a_part.iter().flat_map(|c| c.vars()).collect()
    }

    pub fn b_vars(&self) -> BTreeSet<String> {
        self.b_part.vars()
    }

    /// Variables occurring on both sides.
    pub fn shared_vars(&self) -> BTreeSet<String> {
        let b = self.b_vars();
        self.a_vars().into_iter().filter(|v| b.contains(v)).collect()
    }

    /// Variables of the B-part that never occur in the A-part.
    pub fn auxiliary_vars(&self) -> BTreeSet<String> {
        let a = self.a_vars();
        self.b_vars().into_iter().filter(|v| !a.contains(v)).collect()
    }
}
