//! Desk-scale binary classifiers with analytic per-example gradients.

use crate::codec::ShapeManifest;
use crate::sampler::sample_gaussian;
use rand::RngCore;
use std::fmt;
use std::str::FromStr;

use super::FedsimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LogReg,
    Mlp { hidden: usize },
}

impl FromStr for ModelKind {
    type Err = FedsimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logreg" => Ok(ModelKind::LogReg),
            "mlp" => Ok(ModelKind::Mlp { hidden: 16 }),
            other => match other.strip_prefix("mlp:").map(str::parse) {
                Some(Ok(hidden)) if hidden > 0 => Ok(ModelKind::Mlp { hidden }),
                _ => Err(FedsimError::Config(format!(
                    "unknown model {other:?} (logreg, mlp, mlp:<hidden>)"
                ))),
            },
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::LogReg => f.write_str("logreg"),
            ModelKind::Mlp { hidden } => write!(f, "mlp:{hidden}"),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A model over `features`-dimensional inputs with labels in {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Model {
    pub kind: ModelKind,
    pub features: usize,
}

impl Model {
    pub fn new(kind: ModelKind, features: usize) -> Self {
        Model { kind, features }
    }

    /// Layout: logreg `[w (d), bias]`; MLP `[W1 (h×d row-major), b1 (h), w2 (h), b2]`.
    pub fn shapes(&self) -> ShapeManifest {
        let d = self.features;
        match self.kind {
            ModelKind::LogReg => ShapeManifest(vec![vec![d], vec![1]]),
            ModelKind::Mlp { hidden } => {
                ShapeManifest(vec![vec![hidden, d], vec![hidden], vec![hidden], vec![1]])
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.shapes().total()
    }

    /// Logreg starts at zero; the MLP draws weights from N(0, 1/d) so hidden
    /// units differ.
    pub fn init(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self.kind {
            ModelKind::LogReg => vec![0.0; self.num_params()],
            ModelKind::Mlp { .. } => {
                let sd = 1.0 / (self.features as f64).sqrt();
                sample_gaussian(sd, self.num_params(), rng).expect("positive sd")
            }
        }
    }

    /// Probability of class 1.
    pub fn predict_proba(&self, theta: &[f64], x: &[f64]) -> f64 {
        let d = self.features;
        match self.kind {
            ModelKind::LogReg => sigmoid(dot(&theta[..d], x) + theta[d]),
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = theta.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let z: f64 = (0..hidden)
                    .map(|j| w2[j] * (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
                    .sum();
                sigmoid(z + b2[0])
            }
        }
    }

    pub fn predict(&self, theta: &[f64], x: &[f64]) -> u8 {
        (self.predict_proba(theta, x) >= 0.5) as u8
    }

    /// Gradient of the binary cross-entropy at one example.
    pub fn gradient(&self, theta: &[f64], x: &[f64], y: u8) -> Vec<f64> {
        let d = self.features;
        let y = y as f64;
        match self.kind {
            ModelKind::LogReg => {
                let r = sigmoid(dot(&theta[..d], x) + theta[d]) - y;
                let mut g: Vec<f64> = x.iter().map(|xi| r * xi).collect();
                g.push(r);
                g
            }
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = theta.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let h: Vec<f64> = (0..hidden)
                    .map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
                    .collect();
                let r = sigmoid(dot(w2, &h) + b2[0]) - y;
                let mut g = vec![0.0; self.num_params()];
                let (gw1, grest) = g.split_at_mut(hidden * d);
                let (gb1, grest) = grest.split_at_mut(hidden);
                let (gw2, gb2) = grest.split_at_mut(hidden);
                for j in 0..hidden {
                    let da = r * w2[j] * (1.0 - h[j] * h[j]);
                    for (gw, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gw = da * xi;
                    }
                    gb1[j] = da;
                    gw2[j] = r * h[j];
                }
                gb2[0] = r;
                g
            }
        }
    }

    pub fn loss(&self, theta: &[f64], x: &[f64], y: u8) -> f64 {
        let p = self.predict_proba(theta, x).clamp(1e-15, 1.0 - 1e-15);
        if y == 1 {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn finite_difference(model: &Model, theta: &[f64], x: &[f64], y: u8) -> Vec<f64> {
        let h = 1e-6;
        (0..theta.len())
            .map(|i| {
                let mut plus = theta.to_vec();
                let mut minus = theta.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (model.loss(&plus, x, y) - model.loss(&minus, x, y)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for kind in [ModelKind::LogReg, ModelKind::Mlp { hidden: 4 }] {
            let model = Model::new(kind, 5);
            let theta: Vec<f64> = (0..model.num_params())
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect();
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for y in [0, 1] {
                let g = model.gradient(&theta, &x, y);
                let fd = finite_difference(&model, &theta, &x, y);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-6, "{kind}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn shapes_and_parsing() {
        assert_eq!(Model::new(ModelKind::LogReg, 99).num_params(), 100);
        assert_eq!(
            Model::new(ModelKind::Mlp { hidden: 3 }, 4).num_params(),
            12 + 3 + 3 + 1
        );
        assert_eq!(
            "mlp:8".parse::<ModelKind>().unwrap(),
            ModelKind::Mlp { hidden: 8 }
        );
        assert_eq!("logreg".parse::<ModelKind>().unwrap(), ModelKind::LogReg);
        assert!("cnn".parse::<ModelKind>().is_err());
        assert!("mlp:0".parse::<ModelKind>().is_err());
    }
}
