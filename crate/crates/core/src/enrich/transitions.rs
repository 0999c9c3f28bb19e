//! First-order Markov chain over action signatures.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ActionSignature, Dialogue};
use crate::error::{Error, Result};

const START: &str = "START";
const END: &str = "END";
const ROW_TOLERANCE: f64 = 1e-9;

/// Row-stochastic transition matrix. State 0 is START, the last state is END and the states
/// in between are the action vocabulary in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    actions: Vec<ActionSignature>,
    probs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MatrixWire {
    states: Vec<String>,
    probs: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Builds a matrix from explicit rows (`actions.len() + 2` states) and checks it.
    pub fn from_rows(actions: Vec<ActionSignature>, probs: Vec<Vec<f64>>) -> Result<Self> {
        let m = TransitionMatrix { actions, probs };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let n = self.state_count();
        if self.probs.len() != n || self.probs.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("transition matrix", format!("expected {n}x{n} entries")));
        }
        for (i, row) in self.probs.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid("transition matrix", format!("row {i} has an entry outside [0, 1]")));
            }
            if row[0] != 0.0 {
                return Err(Error::invalid("transition matrix", "transition into START"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::invalid("transition matrix", format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> &[ActionSignature] {
        &self.actions
    }

    /// START + actions + END.
    pub fn state_count(&self) -> usize {
        self.actions.len() + 2
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn end(&self) -> usize {
        self.actions.len() + 1
    }

    pub fn index_of(&self, action: &ActionSignature) -> Option<usize> {
        self.actions.binary_search(action).ok().map(|i| i + 1)
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// `P(to | from)`; `None` for either side means START (as `from`) or END (as `to`).
    pub fn prob(&self, from: Option<&ActionSignature>, to: Option<&ActionSignature>) -> f64 {
        let i = match from {
            None => Some(self.start()),
            Some(a) => self.index_of(a),
        };
        let j = match to {
            None => Some(self.end()),
            Some(a) => self.index_of(a),
        };
        match (i, j) {
            (Some(i), Some(j)) => self.probs[i][j],
            _ => 0.0,
        }
    }

    fn label(&self, state: usize) -> String {
        if state == self.start() {
            START.to_string()
        } else if state == self.end() {
            END.to_string()
        } else {
            self.actions[state - 1].to_string()
        }
    }
}

impl Serialize for TransitionMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixWire {
            states: (0..self.state_count()).map(|i| self.label(i)).collect(),
            probs: self.probs.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransitionMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = MatrixWire::deserialize(deserializer)?;
        let n = wire.states.len();
        if n < 2 || wire.states[0] != START || wire.states[n - 1] != END {
            return Err(D::Error::custom("states must run from START to END"));
        }
        let actions = wire.states[1..n - 1]
            .iter()
            .map(|s| s.parse::<ActionSignature>().map_err(D::Error::custom))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if actions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(D::Error::custom("action states must be sorted and distinct"));
        }
        TransitionMatrix::from_rows(actions, wire.probs).map_err(D::Error::custom)
    }
}

/// Counts consecutive pairs over `START, a_1, ..., a_T, END` for every dialogue and
/// normalizes each row. Rows without outgoing counts go to END with probability 1.
pub fn estimate_transitions(corpus: &[Dialogue]) -> TransitionMatrix {
    let actions: Vec<ActionSignature> = corpus
        .iter()
        .flat_map(|d| d.turns.iter().map(|t| t.signature()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = actions.len() + 2;
    let end = n - 1;
    let mut counts = vec![vec![0u64; n]; n];
    for d in corpus {
        let mut prev = 0;
        for t in &d.turns {
            let cur = actions.binary_search(&t.signature()).expect("collected above") + 1;
            counts[prev][cur] += 1;
            prev = cur;
        }
        counts[prev][end] += 1;
    }
    let probs = counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                let mut r = vec![0.0; n];
                r[end] = 1.0;
                r
            } else {
                row.into_iter().map(|c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    TransitionMatrix { actions, probs }
}

fn draw<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = None;
    for (j, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = Some(j);
        if u < acc {
            return j;
        }
    }
    last_positive.expect("rows are stochastic")
}

/// Random walk from START until END or `max_turns` actions; sentinels are not returned.
pub fn sample_action_sequence<R: Rng + ?Sized>(
    matrix: &TransitionMatrix,
    rng: &mut R,
    max_turns: usize,
) -> Vec<ActionSignature> {
    let mut out = Vec::new();
    let mut state = matrix.start();
    while out.len() < max_turns {
        let next = draw(matrix.row(state), rng);
        if next == matrix.end() {
            break;
        }
        out.push(matrix.actions[next - 1].clone());
        state = next;
    }
    out
}
