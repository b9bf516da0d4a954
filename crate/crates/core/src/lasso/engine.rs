//! Covariance-update coordinate descent on the Gram form of the problem.
//!
//! The smooth part is `0.5 * yy - theta' corr + 0.5 * theta' G theta` with
//! `G = Z'Z/n`, `corr = Z'y/n`, `yy = y'y/n`. The working vector `c = corr - G theta`
//! is the negative gradient and is kept current after every coordinate move.

use nalgebra::{DMatrix, DVector};

use super::{soft_threshold, SolverConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct GramSystem {
    pub gram: DMatrix<f64>,
    pub corr: DVector<f64>,
    pub yy: f64,
}

impl GramSystem {
    pub fn from_data(z: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let n = z.nrows().max(1) as f64;
        Self { gram: z.tr_mul(z) / n, corr: z.tr_mul(y) / n, yy: y.dot(y) / n }
    }

    /// Column scales `sqrt(G_jj)` (1 for empty columns).
    pub fn scales(&self) -> DVector<f64> {
        DVector::from_fn(self.gram.nrows(), |j, _| {
            let d = self.gram[(j, j)];
            if d > 0.0 {
                d.sqrt()
            } else {
                1.0
            }
        })
    }

    pub fn rescaled(&self, scales: &DVector<f64>) -> Self {
        let p = self.gram.nrows();
        let gram = DMatrix::from_fn(p, p, |i, j| self.gram[(i, j)] / (scales[i] * scales[j]));
        let corr = self.corr.component_div(scales);
        Self { gram, corr, yy: self.yy }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PenaltySpec<'a> {
    pub mask: &'a [bool],
    pub groups: &'a [Vec<usize>],
    pub lambda_l1: f64,
    pub lambda_group: f64,
}

impl PenaltySpec<'_> {
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let l1: f64 = theta.iter().zip(self.mask).filter(|(_, &m)| m).map(|(t, _)| t.abs()).sum();
        let grp: f64 = self
            .groups
            .iter()
            .map(|g| g.iter().map(|&j| theta[j] * theta[j]).sum::<f64>().sqrt())
            .sum();
        self.lambda_l1 * l1 + self.lambda_group * grp
    }
}

/// Maximum violation of the subgradient stationarity conditions given the
/// gradient of the smooth part.
pub(crate) fn kkt_from_gradient(grad: &DVector<f64>, theta: &DVector<f64>, pen: &PenaltySpec<'_>) -> f64 {
    let p = theta.len();
    let mut in_group = vec![false; p];
    let mut worst: f64 = 0.0;
    if pen.lambda_group > 0.0 {
        for g in pen.groups {
            for &j in g {
                in_group[j] = true;
            }
            let norm = g.iter().map(|&j| theta[j] * theta[j]).sum::<f64>().sqrt();
            if norm == 0.0 {
                let s: f64 = g
                    .iter()
                    .map(|&j| soft_threshold(-grad[j], pen.lambda_l1).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(s - pen.lambda_group);
            } else {
                for &j in g {
                    let v = if theta[j] != 0.0 {
                        (grad[j] + pen.lambda_l1 * theta[j].signum() + pen.lambda_group * theta[j] / norm).abs()
                    } else {
                        (grad[j].abs() - pen.lambda_l1).max(0.0)
                    };
                    worst = worst.max(v);
                }
            }
        }
    }
    for j in 0..p {
        if in_group[j] {
            continue;
        }
        let v = if !pen.mask[j] {
            grad[j].abs()
        } else if theta[j] != 0.0 {
            (grad[j] + pen.lambda_l1 * theta[j].signum()).abs()
        } else {
            (grad[j].abs() - pen.lambda_l1).max(0.0)
        };
        worst = worst.max(v);
    }
    worst.max(0.0)
}

#[derive(Debug, Clone)]
enum Block {
    Free(usize),
    Single(usize),
    Group(Vec<usize>),
}

#[derive(Debug, Clone)]
pub(crate) struct EngineOutput {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub kkt: f64,
}

fn build_blocks(pen: &PenaltySpec<'_>) -> Vec<Block> {
    let p = pen.mask.len();
    let mut group_of = vec![usize::MAX; p];
    if pen.lambda_group > 0.0 {
        for (gi, g) in pen.groups.iter().enumerate() {
            for &j in g {
                group_of[j] = gi;
            }
        }
    }
    let mut emitted = vec![false; pen.groups.len()];
    let mut blocks = Vec::with_capacity(p);
    for j in 0..p {
        if !pen.mask[j] {
            blocks.push(Block::Free(j));
        } else if group_of[j] == usize::MAX {
            blocks.push(Block::Single(j));
        } else if !emitted[group_of[j]] {
            emitted[group_of[j]] = true;
            blocks.push(Block::Group(pen.groups[group_of[j]].clone()));
        }
    }
    blocks
}

/// Minimizer over t of `0.5 a t^2 - b t + l1 |t| + lg sqrt(t^2 + r2)`.
fn group_coordinate_minimizer(a: f64, b: f64, l1: f64, lg: f64, r2: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let m = b.abs() - l1;
    if m <= 0.0 {
        return 0.0;
    }
    if r2 <= 0.0 {
        return b.signum() * (m - lg).max(0.0) / a;
    }
    let r = r2.sqrt();
    // phi(t) = a t + lg t / sqrt(t^2 + r^2) - m is increasing on [lo, hi].
    let mut lo = m / (a + lg / r);
    let mut hi = m / a;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let s = (t * t + r2).sqrt();
        let phi = a * t + lg * t / s - m;
        if phi > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let dphi = a + lg * r2 / (s * s * s);
        let mut next = t - phi / dphi;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            t = next;
            break;
        }
        t = next;
    }
    b.signum() * t
}

struct State<'a> {
    sys: &'a GramSystem,
    pen: PenaltySpec<'a>,
    theta: DVector<f64>,
    c: DVector<f64>,
}

impl State<'_> {
    fn move_coord(&mut self, j: usize, new: f64) -> f64 {
        let delta = new - self.theta[j];
        if delta != 0.0 {
            self.theta[j] = new;
            self.c.axpy(-delta, &self.sys.gram.column(j), 1.0);
        }
        delta.abs()
    }

    fn update_free(&mut self, j: usize) -> f64 {
        let a = self.sys.gram[(j, j)];
        let new = if a > 0.0 { (self.c[j] + a * self.theta[j]) / a } else { 0.0 };
        self.move_coord(j, new)
    }

    fn update_single(&mut self, j: usize) -> f64 {
        let a = self.sys.gram[(j, j)];
        let new = if a > 0.0 { soft_threshold(self.c[j] + a * self.theta[j], self.pen.lambda_l1) / a } else { 0.0 };
        self.move_coord(j, new)
    }

    fn group_is_zero(&self, g: &[usize]) -> bool {
        g.iter().all(|&j| self.theta[j] == 0.0)
    }

    /// Proximal-gradient step from the origin with backtracking.
    fn prox_from_zero(&mut self, g: &[usize]) -> f64 {
        let (l1, lg) = (self.pen.lambda_l1, self.pen.lambda_group);
        let dmax = g.iter().map(|&j| self.sys.gram[(j, j)]).fold(0.0, f64::max);
        if dmax <= 0.0 {
            return 0.0;
        }
        let mut step = 1.0 / dmax;
        let mut cand = vec![0.0; g.len()];
        for _ in 0..60 {
            let u: Vec<f64> = g.iter().map(|&j| soft_threshold(step * self.c[j], step * l1)).collect();
            let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if un <= step * lg {
                return 0.0;
            }
            let shrink = 1.0 - step * lg / un;
            for (k, v) in u.iter().enumerate() {
                cand[k] = shrink * v;
            }
            // sufficient decrease: cand' G cand <= |cand|^2 / step
            let mut quad = 0.0;
            for (a, &ja) in g.iter().enumerate() {
                if cand[a] == 0.0 {
                    continue;
                }
                let col = self.sys.gram.column(ja);
                let mut s = 0.0;
                for (b, &jb) in g.iter().enumerate() {
                    s += col[jb] * cand[b];
                }
                quad += cand[a] * s;
            }
            let nrm2: f64 = cand.iter().map(|v| v * v).sum();
            if quad <= nrm2 / step * (1.0 + 1e-12) {
                break;
            }
            step *= 0.5;
        }
        let mut change: f64 = 0.0;
        for (k, &j) in g.iter().enumerate() {
            change = change.max(self.move_coord(j, cand[k]));
        }
        change
    }

    fn update_group(&mut self, g: &[usize]) -> f64 {
        let (l1, lg) = (self.pen.lambda_l1, self.pen.lambda_group);
        let mut change: f64 = 0.0;
        // negative gradient of the smooth part with this group set to zero
        let at_zero: Vec<f64> = g
            .iter()
            .map(|&j| self.c[j] + g.iter().map(|&k| self.sys.gram[(j, k)] * self.theta[k]).sum::<f64>())
            .collect();
        let screen = at_zero.iter().map(|&b| soft_threshold(b, l1).powi(2)).sum::<f64>().sqrt();
        if screen <= lg {
            for &j in g {
                change = change.max(self.move_coord(j, 0.0));
            }
            return change;
        }
        if self.group_is_zero(g) {
            change = change.max(self.prox_from_zero(g));
        }
        let mut sumsq: f64 = g.iter().map(|&j| self.theta[j] * self.theta[j]).sum();
        for &j in g {
            let a = self.sys.gram[(j, j)];
            let old = self.theta[j];
            let r2 = (sumsq - old * old).max(0.0);
            let b = self.c[j] + a * old;
            let new = group_coordinate_minimizer(a, b, l1, lg, r2);
            change = change.max(self.move_coord(j, new));
            sumsq = r2 + new * new;
        }
        change
    }

    fn is_active(&self, block: &Block) -> bool {
        match block {
            Block::Free(_) => true,
            Block::Single(j) => self.theta[*j] != 0.0,
            Block::Group(g) => !self.group_is_zero(g),
        }
    }

    fn sweep(&mut self, blocks: &[Block], active_only: bool) -> f64 {
        let mut change: f64 = 0.0;
        for block in blocks {
            if active_only && !self.is_active(block) {
                continue;
            }
            let d = match block {
                Block::Free(j) => self.update_free(*j),
                Block::Single(j) => self.update_single(*j),
                Block::Group(g) => self.update_group(g),
            };
            change = change.max(d);
        }
        change
    }

    fn refresh_gradient(&mut self) {
        self.c = &self.sys.corr - &self.sys.gram * &self.theta;
    }

    fn kkt(&self) -> f64 {
        kkt_from_gradient(&(-&self.c), &self.theta, &self.pen)
    }

    fn objective(&self) -> f64 {
        0.5 * self.sys.yy - 0.5 * self.theta.dot(&(&self.sys.corr + &self.c)) + self.pen.value(&self.theta)
    }
}

/// Solve the penalized problem in Gram form by block coordinate descent.
///
/// `trace`, when given, receives the objective after every sweep.
pub(crate) fn solve(
    sys: &GramSystem,
    pen: PenaltySpec<'_>,
    warm: Option<&DVector<f64>>,
    config: &SolverConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<EngineOutput> {
    let p = sys.gram.nrows();
    let theta = match warm {
        Some(w) => w.clone(),
        None => DVector::zeros(p),
    };
    let mut st = State { sys, pen, theta, c: DVector::zeros(p) };
    st.refresh_gradient();
    let blocks = build_blocks(&pen);
    let tol = config.tolerance;
    let mut iterations = 0usize;
    if let Some(t) = trace.as_deref_mut() {
        t.push(st.objective());
    }
    loop {
        let change = st.sweep(&blocks, false);
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(st.objective());
        }
        if change <= tol {
            st.refresh_gradient();
            let kkt = st.kkt();
            if kkt <= 10.0 * tol {
                return Ok(EngineOutput { theta: st.theta, iterations, kkt });
            }
        }
        if iterations >= config.max_iterations {
            st.refresh_gradient();
            return Err(Error::NonConvergence { iterations, kkt_residual: st.kkt() });
        }
        if change > tol {
            loop {
                let change = st.sweep(&blocks, true);
                iterations += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(st.objective());
                }
                if change <= tol {
                    break;
                }
                if iterations >= config.max_iterations {
                    st.refresh_gradient();
                    return Err(Error::NonConvergence { iterations, kkt_residual: st.kkt() });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_minimizer_satisfies_stationarity() {
        let (a, b, l1, lg, r2) = (1.3, 2.0, 0.4, 0.7, 0.25);
        let t = group_coordinate_minimizer(a, b, l1, lg, r2);
        let g = a * t - b + l1 * t.signum() + lg * t / (t * t + r2).sqrt();
        assert!(g.abs() < 1e-12, "stationarity residual {g}");
    }

    #[test]
    fn coordinate_minimizer_zero_below_l1() {
        assert_eq!(group_coordinate_minimizer(1.0, 0.3, 0.5, 0.1, 1.0), 0.0);
        assert_eq!(group_coordinate_minimizer(1.0, -0.3, 0.5, 0.1, 0.0), 0.0);
    }

    #[test]
    fn coordinate_minimizer_isolated_group_uses_combined_threshold() {
        let t = group_coordinate_minimizer(2.0, -3.0, 0.5, 1.0, 0.0);
        assert!((t - (-0.75)).abs() < 1e-15);
    }
}
