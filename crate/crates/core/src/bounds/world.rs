//! Exactly enumerable joint distributions P(x, c, y).

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BoundsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub nx: usize,
    /// Context values, including the `absent` value when there is one.
    pub nc: usize,
    pub ny: usize,
    /// `joint[(x * nc + c) * ny + y]`.
    pub joint: Vec<f64>,
    /// Relevant answers F_x for each x.
    pub fact_map: Vec<BTreeSet<usize>>,
    /// Context index meaning "retrieval returned nothing relevant".
    pub absent: Option<usize>,
    /// 1 − ε of the construction.
    pub retrieval_coverage: f64,
    /// δ of the construction.
    pub reliance: f64,
}

impl ToyWorld {
    pub fn validate(&self) -> Result<(), BoundsError> {
        let bad = |m: String| Err(BoundsError::InvalidWorld(m));
        if self.nx == 0 || self.nc == 0 || self.ny == 0 {
            return bad("empty dimension".into());
        }
        if self.joint.len() != self.nx * self.nc * self.ny {
            return bad(format!("joint has {} cells", self.joint.len()));
        }
        if self.joint.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("negative or non-finite probability".into());
        }
        let s: f64 = self.joint.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return bad(format!("joint sums to {s}"));
        }
        if self.fact_map.len() != self.nx || self.fact_map.iter().any(|f| f.is_empty() || f.iter().any(|&y| y >= self.ny)) {
            return bad("every x needs a non-empty fact set within Y".into());
        }
        if self.absent.is_some_and(|a| a >= self.nc) {
            return bad("absent context out of range".into());
        }
        Ok(())
    }

    pub fn p(&self, x: usize, c: usize, y: usize) -> f64 {
        self.joint[(x * self.nc + c) * self.ny + y]
    }

    pub fn p_xc(&self, x: usize, c: usize) -> f64 {
        (0..self.ny).map(|y| self.p(x, c, y)).sum()
    }

    pub fn p_x(&self, x: usize) -> f64 {
        (0..self.nc).map(|c| self.p_xc(x, c)).sum()
    }

    /// P(y | x, c); uniform when P(x, c) = 0.
    pub fn p_y_given_xc(&self, x: usize, c: usize) -> Vec<f64> {
        let z = self.p_xc(x, c);
        (0..self.ny).map(|y| if z > 0.0 { self.p(x, c, y) / z } else { 1.0 / self.ny as f64 }).collect()
    }

    pub fn p_y_given_x(&self, x: usize) -> Vec<f64> {
        let z = self.p_x(x);
        (0..self.ny)
            .map(|y| {
                let m: f64 = (0..self.nc).map(|c| self.p(x, c, y)).sum();
                if z > 0.0 { m / z } else { 1.0 / self.ny as f64 }
            })
            .collect()
    }

    /// Builds the joint from P(x), P(c | x) and P(y | x, c) tables.
    pub fn from_factors(
        px: &[f64],
        pc_x: &[Vec<f64>],
        py_xc: &[Vec<Vec<f64>>],
        fact_map: Vec<BTreeSet<usize>>,
    ) -> Result<Self, BoundsError> {
        let nx = px.len();
        let nc = pc_x.first().map_or(0, |r| r.len());
        let ny = py_xc.first().and_then(|r| r.first()).map_or(0, |r| r.len());
        let mut joint = Vec::with_capacity(nx * nc * ny);
        for x in 0..nx {
            for c in 0..nc {
                for y in 0..ny {
                    joint.push(px[x] * pc_x[x][c] * py_xc[x][c][y]);
                }
            }
        }
        // Absorb rounding so the sum is 1 to machine precision.
        let s: f64 = joint.iter().sum();
        joint.iter_mut().for_each(|p| *p /= s);
        let w = ToyWorld { nx, nc, ny, joint, fact_map, absent: None, retrieval_coverage: 1.0, reliance: 0.0 };
        w.validate()?;
        Ok(w)
    }

    /// Random world whose answer tables are sharpened by `temperature`
    /// (larger is sharper). Context marginals are kept away from zero.
    pub fn random(nx: usize, nc: usize, ny: usize, temperature: f64, rng: &mut ChaCha8Rng) -> Result<Self, BoundsError> {
        let px = mixed_simplex(nx, 0.5, rng);
        let pc_x: Vec<Vec<f64>> = (0..nx).map(|_| mixed_simplex(nc, 0.5, rng)).collect();
        let py_xc: Vec<Vec<Vec<f64>>> = (0..nx)
            .map(|_| {
                (0..nc)
                    .map(|_| {
                        let logits: Vec<f64> = (0..ny).map(|_| temperature * gaussian(rng)).collect();
                        crate::numeric::softmax(&logits)
                    })
                    .collect()
            })
            .collect();
        let facts = (0..nx).map(|_| BTreeSet::from([0])).collect();
        Self::from_factors(&px, &pc_x, &py_xc, facts)
    }

    /// c carries no information about y beyond x.
    pub fn independent(nx: usize, nc: usize, ny: usize, rng: &mut ChaCha8Rng) -> Result<Self, BoundsError> {
        let px = mixed_simplex(nx, 0.5, rng);
        let pc_x: Vec<Vec<f64>> = (0..nx).map(|_| mixed_simplex(nc, 0.5, rng)).collect();
        let py_xc: Vec<Vec<Vec<f64>>> = (0..nx)
            .map(|_| {
                let row = mixed_simplex(ny, 0.2, rng);
                vec![row; nc]
            })
            .collect();
        Self::from_factors(&px, &pc_x, &py_xc, (0..nx).map(|_| BTreeSet::from([0])).collect())
    }

    /// One x, a uniform bit y, and c = y.
    pub fn one_bit_channel() -> Self {
        let py = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        Self::from_factors(&[1.0], &[vec![0.5, 0.5]], &py, vec![BTreeSet::from([0, 1])]).expect("valid construction")
    }

    /// Retrieval world for the hallucination bound. Context 0 covers F_x and
    /// occurs with probability 1 − ε; context 1 is a miss. Under coverage the
    /// answer lies in F_x with probability 1 − δ; under a miss it is uniform over Y.
    pub fn retrieval(nx: usize, ny: usize, facts_per_x: usize, epsilon: f64, delta: f64) -> Result<Self, BoundsError> {
        if !(0.0..=1.0).contains(&epsilon) || !(0.0..=1.0).contains(&delta) {
            return Err(BoundsError::Config("ε and δ must lie in [0, 1]".into()));
        }
        if facts_per_x == 0 || facts_per_x >= ny {
            return Err(BoundsError::Config("need 0 < |F_x| < |Y|".into()));
        }
        let fact_map: Vec<BTreeSet<usize>> =
            (0..nx).map(|x| (0..facts_per_x).map(|i| (x + i) % ny).collect()).collect();
        let px = vec![1.0 / nx as f64; nx];
        let pc_x = vec![vec![1.0 - epsilon, epsilon]; nx];
        let py_xc: Vec<Vec<Vec<f64>>> = fact_map
            .iter()
            .map(|f| {
                let covered: Vec<f64> = (0..ny)
                    .map(|y| {
                        if f.contains(&y) {
                            (1.0 - delta) / f.len() as f64
                        } else {
                            delta / (ny - f.len()) as f64
                        }
                    })
                    .collect();
                vec![covered, vec![1.0 / ny as f64; ny]]
            })
            .collect();
        let mut w = Self::from_factors(&px, &pc_x, &py_xc, fact_map)?;
        w.absent = Some(1);
        w.retrieval_coverage = 1.0 - epsilon;
        w.reliance = delta;
        Ok(w)
    }
}

/// Point on the simplex: `floor` of the mass spread evenly, the rest Dirichlet(1).
fn mixed_simplex(n: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| floor / n as f64 + (1.0 - floor) * v / s).collect()
}

/// Standard normal via Box–Muller.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// I(y; c | x) = Σ P(x,c,y) ln[P(y|x,c) / P(y|x)].
pub fn mutual_information(world: &ToyWorld) -> f64 {
    let mut total = 0.0;
    for x in 0..world.nx {
        let pyx = world.p_y_given_x(x);
        for c in 0..world.nc {
            let pyxc = world.p_y_given_xc(x, c);
            for y in 0..world.ny {
                let p = world.p(x, c, y);
                if p > 0.0 {
                    total += p * (pyxc[y] / pyx[y]).ln();
                }
            }
        }
    }
    total.max(0.0)
}

/// H(y | x, c) in nats.
pub fn conditional_entropy_xc(world: &ToyWorld) -> f64 {
    let mut h = 0.0;
    for x in 0..world.nx {
        for c in 0..world.nc {
            let q = world.p_y_given_xc(x, c);
            for y in 0..world.ny {
                let p = world.p(x, c, y);
                if p > 0.0 {
                    h -= p * q[y].ln();
                }
            }
        }
    }
    h
}

/// H(y | x) in nats.
pub fn conditional_entropy_x(world: &ToyWorld) -> f64 {
    let mut h = 0.0;
    for x in 0..world.nx {
        let q = world.p_y_given_x(x);
        for c in 0..world.nc {
            for y in 0..world.ny {
                let p = world.p(x, c, y);
                if p > 0.0 {
                    h -= p * q[y].ln();
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mi_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ToyWorld::independent(3, 2, 4, &mut rng).unwrap();
        assert!(mutual_information(&w).abs() < 1e-12);
        assert!((mutual_information(&ToyWorld::one_bit_channel()) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_matches_double_loop_on_fixture() {
        // P(x) = (0.5, 0.5); P(c|x) = 0.5; P(y|x,c) given per cell.
        let py = vec![
            vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            vec![vec![0.5, 0.5], vec![0.6, 0.4]],
        ];
        let w = ToyWorld::from_factors(&[0.5, 0.5], &[vec![0.5, 0.5], vec![0.5, 0.5]], &py, vec![[0].into(), [0].into()])
            .unwrap();
        // Oracle: Σ_x P(x) Σ_c P(c|x) Σ_y P(y|x,c) ln(P(y|x,c) / P(y|x)) with P(y|x) = mean over c.
        let mut oracle = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let pyx = 0.5 * (py[x][0][y] + py[x][1][y]);
                for c in 0..2 {
                    oracle += 0.25 * py[x][c][y] * (py[x][c][y] / pyx).ln();
                }
            }
        }
        assert!((mutual_information(&w) - oracle).abs() < 1e-12);
        let gap = conditional_entropy_x(&w) - conditional_entropy_xc(&w);
        assert!((gap - oracle).abs() < 1e-12);
    }

    #[test]
    fn retrieval_world_shape() {
        let w = ToyWorld::retrieval(3, 5, 2, 0.1, 0.05).unwrap();
        assert_eq!(w.absent, Some(1));
        assert!((w.p_xc(0, 1) - 0.1 / 3.0).abs() < 1e-12);
        let q = w.p_y_given_xc(0, 0);
        let off: f64 = (0..5).filter(|y| !w.fact_map[0].contains(y)).map(|y| q[y]).sum();
        assert!((off - 0.05).abs() < 1e-12);
    }
}
