use std::ops::Mul;

use crate::error::{Error, Result};

/// Sign of a loss movement, or the product of two such signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignScore(i8);

impl SignScore {
    pub const NEG: SignScore = SignScore(-1);
    pub const ZERO: SignScore = SignScore(0);
    pub const POS: SignScore = SignScore(1);

    pub fn new(v: i8) -> Option<Self> {
        matches!(v, -1..=1).then_some(SignScore(v))
    }

    /// `sign(before − after)`, with differences below `eps_zero` in
    /// magnitude mapped to zero. A falling loss gives `+1`.
    pub fn of_change(before: f64, after: f64, eps_zero: f64) -> Self {
        let d = before - after;
        if d.abs() < eps_zero || d == 0.0 {
            SignScore::ZERO
        } else if d > 0.0 {
            SignScore::POS
        } else {
            SignScore::NEG
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }
}

impl Mul for SignScore {
    type Output = SignScore;

    fn mul(self, rhs: SignScore) -> SignScore {
        SignScore(self.0 * rhs.0)
    }
}

/// Values one side contributes at one checkpoint: a loss per sample, or a
/// row of per-class values per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SideValues {
    PerSample(Vec<f64>),
    PerClass {
        rows: usize,
        classes: usize,
        /// Row-major `rows × classes`.
        values: Vec<f64>,
    },
}

impl SideValues {
    pub fn rows(&self) -> usize {
        match self {
            SideValues::PerSample(v) => v.len(),
            SideValues::PerClass { rows, .. } => *rows,
        }
    }

    fn shape(&self) -> (usize, Option<usize>) {
        match self {
            SideValues::PerSample(v) => (v.len(), None),
            SideValues::PerClass { rows, classes, .. } => (*rows, Some(*classes)),
        }
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> SideValues {
        match self {
            SideValues::PerSample(v) => SideValues::PerSample(idx.iter().map(|&i| v[i]).collect()),
            SideValues::PerClass { classes, values, .. } => {
                let mut out = Vec::with_capacity(idx.len() * classes);
                for &i in idx {
                    out.extend_from_slice(&values[i * classes..(i + 1) * classes]);
                }
                SideValues::PerClass {
                    rows: idx.len(),
                    classes: *classes,
                    values: out,
                }
            }
        }
    }

    fn signs(before: &SideValues, after: &SideValues, eps: f64) -> Vec<SignScore> {
        let (x, y) = match (before, after) {
            (SideValues::PerSample(x), SideValues::PerSample(y)) => (x, y),
            (SideValues::PerClass { values: x, .. }, SideValues::PerClass { values: y, .. }) => (x, y),
            _ => unreachable!("shapes checked by caller"),
        };
        x.iter()
            .zip(y)
            .map(|(&p, &q)| SignScore::of_change(p, q, eps))
            .collect()
    }
}

/// Products of side signs, shaped `a × b × classes` (`classes == 1` for the
/// pairwise case).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreArray {
    Pairwise {
        a: usize,
        b: usize,
        values: Vec<SignScore>,
    },
    PerClass {
        a: usize,
        b: usize,
        classes: usize,
        values: Vec<SignScore>,
    },
}

impl ScoreArray {
    pub fn a_len(&self) -> usize {
        match self {
            ScoreArray::Pairwise { a, .. } | ScoreArray::PerClass { a, .. } => *a,
        }
    }

    pub fn b_len(&self) -> usize {
        match self {
            ScoreArray::Pairwise { b, .. } | ScoreArray::PerClass { b, .. } => *b,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ScoreArray::Pairwise { .. } => 1,
            ScoreArray::PerClass { classes, .. } => *classes,
        }
    }

    pub fn values(&self) -> &[SignScore] {
        match self {
            ScoreArray::Pairwise { values, .. } | ScoreArray::PerClass { values, .. } => values,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            ScoreArray::Pairwise { a, b, .. } => vec![*a, *b],
            ScoreArray::PerClass { a, b, classes, .. } => vec![*a, *b, *classes],
        }
    }
}

/// Sign products between the movements of side A (`la0 → la1`) and side B
/// (`lb0 → lb1`).
///
/// Both sides per-sample: `S[a,b] = sA[a]·sB[b]`. Exactly one side
/// per-class: `S[a,b,c] = sA[a(,c)]·sB[b(,c)]`.
pub fn get_score(
    la0: &SideValues,
    la1: &SideValues,
    lb0: &SideValues,
    lb1: &SideValues,
    eps_zero: f64,
) -> Result<ScoreArray> {
    let (sa, sb) = (la0.shape(), lb0.shape());
    if la1.shape() != sa {
        return Err(Error::arg("A-side values differ in shape between checkpoints"));
    }
    if lb1.shape() != sb {
        return Err(Error::arg("B-side values differ in shape between checkpoints"));
    }
    let signs_a = SideValues::signs(la0, la1, eps_zero);
    let signs_b = SideValues::signs(lb0, lb1, eps_zero);
    let (na, nb) = (sa.0, sb.0);
    match (sa.1, sb.1) {
        (None, None) => {
            let mut values = Vec::with_capacity(na * nb);
            for &x in &signs_a {
                values.extend(signs_b.iter().map(|&y| x * y));
            }
            Ok(ScoreArray::Pairwise { a: na, b: nb, values })
        }
        (Some(k), None) => {
            let mut values = Vec::with_capacity(na * nb * k);
            for a in 0..na {
                let row = &signs_a[a * k..(a + 1) * k];
                for &y in &signs_b {
                    values.extend(row.iter().map(|&x| x * y));
                }
            }
            Ok(ScoreArray::PerClass {
                a: na,
                b: nb,
                classes: k,
                values,
            })
        }
        (None, Some(k)) => {
            let mut values = Vec::with_capacity(na * nb * k);
            for &x in &signs_a {
                values.extend(signs_b.iter().map(|&y| x * y));
            }
            Ok(ScoreArray::PerClass {
                a: na,
                b: nb,
                classes: k,
                values,
            })
        }
        (Some(_), Some(_)) => Err(Error::arg("at most one side may carry per-class values")),
    }
}
