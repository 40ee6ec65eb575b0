//! Cone algebra: Jordan products, Nesterov–Todd scaling and step lengths for
//! the zero cone, the nonnegative orthant and second-order cones.

use serde::{Deserialize, Serialize};

/// One block of the cone partition of the slack vector.
///
/// A second-order cone block of dimension `m` constrains `(u0, u1)` with
/// `‖u1‖₂ ≤ u0` where `u0` is the first entry of the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) => d,
        }
    }

    /// Contribution to the barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::NonNeg(d) => d,
            Cone::Soc(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Scaling {
    None,
    /// `W = diag(w)`
    Diag(Vec<f64>),
    /// `W = eta * [w0 w1'; w1 I + w1 w1'/(1 + w0)]` with `w'Jw = 1`.
    Soc { eta: f64, w: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ConeSet {
    pub cones: Vec<Cone>,
    offsets: Vec<usize>,
    dim: usize,
    scalings: Vec<Scaling>,
    /// Scaled point `λ = W z = W⁻¹ s`.
    pub lambda: Vec<f64>,
}

fn soc_jdot(u: &[f64], v: &[f64]) -> f64 {
    u[0] * v[0] - u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

/// `u'Ju` in factored form, accurate near the cone boundary.
fn soc_jnorm2(u: &[f64]) -> f64 {
    let t = norm2(&u[1..]);
    (u[0] - t) * (u[0] + t)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest `α ∈ [0, αmax]` keeping `u + α d` in the closed second-order cone,
/// assuming `u` is interior.
fn soc_step(u: &[f64], d: &[f64], amax: f64) -> f64 {
    let a = soc_jdot(d, d);
    let b = soc_jdot(u, d);
    let c = soc_jnorm2(u).max(0.0);
    let mut alpha = amax;
    // u0 + α d0 ≥ 0
    if d[0] < 0.0 {
        alpha = alpha.min(-u[0] / d[0]);
    }
    // q(α) = a α² + 2 b α + c ≥ 0
    let disc = b * b - a * c;
    if a == 0.0 {
        if b < 0.0 {
            alpha = alpha.min(-c / (2.0 * b));
        }
    } else if disc >= 0.0 {
        let sq = disc.sqrt();
        // numerically stable roots
        let t = -(b + b.signum() * sq);
        let (r1, r2) = if t != 0.0 { (t / a, c / t) } else { (-b / a, -b / a) };
        for r in [r1, r2] {
            if r > 0.0 {
                alpha = alpha.min(r);
            }
        }
    }
    alpha.max(0.0)
}

impl ConeSet {
    pub fn new(cones: &[Cone]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut dim = 0;
        for c in cones {
            offsets.push(dim);
            dim += c.dim();
        }
        Self {
            cones: cones.to_vec(),
            offsets,
            dim,
            scalings: vec![Scaling::None; cones.len()],
            lambda: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.cones.iter().map(Cone::degree).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Cone, usize)> + '_ {
        self.cones.iter().copied().zip(self.offsets.iter().copied())
    }

    /// Marks rows belonging to the zero cone.
    pub fn zero_rows(&self) -> Vec<bool> {
        let mut out = vec![false; self.dim];
        for (c, o) in self.blocks() {
            if let Cone::Zero(d) = c {
                out[o..o + d].iter_mut().for_each(|v| *v = true);
            }
        }
        out
    }

    /// Identity element `e` (zero on the zero cone).
    pub fn unit(&self, out: &mut [f64]) {
        for (c, o) in self.blocks() {
            match c {
                Cone::Zero(d) => out[o..o + d].iter_mut().for_each(|v| *v = 0.0),
                Cone::NonNeg(d) => out[o..o + d].iter_mut().for_each(|v| *v = 1.0),
                Cone::Soc(d) => {
                    out[o] = 1.0;
                    out[o + 1..o + d].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
    }

    /// Shifts `v` so that every non-zero cone block is strictly interior; the
    /// zero-cone part is set to `zero_value`.
    pub fn shift_to_interior(&self, v: &mut [f64], zero_value: Option<f64>) {
        for (c, o) in self.blocks() {
            match c {
                Cone::Zero(d) => {
                    if let Some(z) = zero_value {
                        v[o..o + d].iter_mut().for_each(|x| *x = z);
                    }
                }
                Cone::NonNeg(d) => {
                    let blk = &mut v[o..o + d];
                    let m = blk.iter().cloned().fold(f64::INFINITY, f64::min);
                    if m < 1e-8 {
                        blk.iter_mut().for_each(|x| *x += 1.0 - m);
                    }
                }
                Cone::Soc(d) => {
                    let blk = &mut v[o..o + d];
                    let m = blk[0] - norm2(&blk[1..]);
                    if m < 1e-8 {
                        blk[0] += 1.0 - m;
                    }
                }
            }
        }
    }

    /// Computes the NT scaling at interior `(s, z)` and the scaled point `λ`.
    pub fn update_scaling(&mut self, s: &[f64], z: &[f64]) -> bool {
        for (k, (c, o)) in self.cones.iter().copied().zip(self.offsets.iter().copied()).enumerate() {
            match c {
                Cone::Zero(d) => {
                    self.scalings[k] = Scaling::None;
                    self.lambda[o..o + d].iter_mut().for_each(|v| *v = 0.0);
                }
                Cone::NonNeg(d) => {
                    let mut w = vec![0.0; d];
                    for i in 0..d {
                        let (si, zi) = (s[o + i], z[o + i]);
                        if !(si > 0.0 && zi > 0.0) {
                            return false;
                        }
                        w[i] = (si / zi).sqrt();
                        self.lambda[o + i] = (si * zi).sqrt();
                    }
                    self.scalings[k] = Scaling::Diag(w);
                }
                Cone::Soc(d) => {
                    let sb = &s[o..o + d];
                    let zb = &z[o..o + d];
                    let ss = soc_jnorm2(sb);
                    let zz = soc_jnorm2(zb);
                    if !(ss > 0.0 && zz > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                        return false;
                    }
                    let (sn, zn) = (ss.sqrt(), zz.sqrt());
                    let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
                    let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
                    let dotsz: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + dotsz) / 2.0).sqrt();
                    let mut w = vec![0.0; d];
                    w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                    for i in 1..d {
                        w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                    }
                    // renormalize so that w'Jw = 1 exactly
                    let w1n = norm2(&w[1..]);
                    w[0] = (1.0 + w1n * w1n).sqrt();
                    let eta = (ss / zz).powf(0.25);
                    self.scalings[k] = Scaling::Soc { eta, w };
                    let mut lam = vec![0.0; d];
                    self.apply_block(k, o, zb, &mut lam, false);
                    self.lambda[o..o + d].copy_from_slice(&lam);
                }
            }
        }
        true
    }

    fn apply_block(&self, k: usize, o: usize, v: &[f64], out: &mut [f64], inverse: bool) {
        let d = self.cones[k].dim();
        match &self.scalings[k] {
            Scaling::None => out[..d].iter_mut().for_each(|x| *x = 0.0),
            Scaling::Diag(w) => {
                for i in 0..d {
                    out[i] = if inverse { v[i] / w[i] } else { v[i] * w[i] };
                }
            }
            Scaling::Soc { eta, w } => {
                let _ = o;
                let w0 = w[0];
                let w1 = &w[1..];
                let v0 = v[0];
                let v1 = &v[1..];
                let dotw1v1: f64 = w1.iter().zip(v1).map(|(a, b)| a * b).sum();
                let (sign, scale) = if inverse { (-1.0, 1.0 / eta) } else { (1.0, *eta) };
                out[0] = scale * (w0 * v0 + sign * dotw1v1);
                let coef = sign * v0 + dotw1v1 / (1.0 + w0);
                for i in 1..d {
                    out[i] = scale * (v1[i - 1] + coef * w1[i - 1]);
                }
            }
        }
    }

    /// `out = W v` (zero on the zero cone).
    pub fn mul_w(&self, v: &[f64], out: &mut [f64]) {
        for (k, &o) in self.offsets.iter().enumerate() {
            let d = self.cones[k].dim();
            self.apply_block(k, o, &v[o..o + d], &mut out[o..o + d], false);
        }
    }

    /// `out = W⁻¹ v` (zero on the zero cone).
    pub fn mul_winv(&self, v: &[f64], out: &mut [f64]) {
        for (k, &o) in self.offsets.iter().enumerate() {
            let d = self.cones[k].dim();
            self.apply_block(k, o, &v[o..o + d], &mut out[o..o + d], true);
        }
    }

    /// Dense blocks of `H = W'W`, one per cone, stored row-major (`dim × dim`);
    /// the zero cone and the orthant report their diagonals only.
    pub fn hessian_blocks(&self) -> Vec<Vec<f64>> {
        self.scalings
            .iter()
            .zip(&self.cones)
            .map(|(sc, c)| match sc {
                Scaling::None => vec![0.0; c.dim()],
                Scaling::Diag(w) => w.iter().map(|x| x * x).collect(),
                Scaling::Soc { eta, w } => {
                    let d = w.len();
                    let e2 = eta * eta;
                    let mut h = vec![0.0; d * d];
                    for i in 0..d {
                        for j in 0..d {
                            let jij = if i == j {
                                if i == 0 {
                                    1.0
                                } else {
                                    -1.0
                                }
                            } else {
                                0.0
                            };
                            h[i * d + j] = e2 * (2.0 * w[i] * w[j] - jij);
                        }
                    }
                    h
                }
            })
            .collect()
    }

    /// Jordan product `out = u ∘ v`.
    pub fn circ(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for (c, o) in self.blocks() {
            match c {
                Cone::Zero(d) => out[o..o + d].iter_mut().for_each(|x| *x = 0.0),
                Cone::NonNeg(d) => {
                    for i in o..o + d {
                        out[i] = u[i] * v[i];
                    }
                }
                Cone::Soc(d) => {
                    let dotuv: f64 = (o..o + d).map(|i| u[i] * v[i]).sum();
                    let (u0, v0) = (u[o], v[o]);
                    out[o] = dotuv;
                    for i in o + 1..o + d {
                        out[i] = u0 * v[i] + v0 * u[i];
                    }
                }
            }
        }
    }

    /// Inverse Jordan product `out = λ \ r`, i.e. the `x` with `λ ∘ x = r`.
    pub fn inv_circ(&self, lam: &[f64], r: &[f64], out: &mut [f64]) {
        for (c, o) in self.blocks() {
            match c {
                Cone::Zero(d) => out[o..o + d].iter_mut().for_each(|x| *x = 0.0),
                Cone::NonNeg(d) => {
                    for i in o..o + d {
                        out[i] = r[i] / lam[i];
                    }
                }
                Cone::Soc(d) => {
                    let l0 = lam[o];
                    let r0 = r[o];
                    let l1r1: f64 = (o + 1..o + d).map(|i| lam[i] * r[i]).sum();
                    let l1l1: f64 = (o + 1..o + d).map(|i| lam[i] * lam[i]).sum();
                    let x0 = (l0 * r0 - l1r1) / (l0 * l0 - l1l1);
                    out[o] = x0;
                    for i in o + 1..o + d {
                        out[i] = (r[i] - x0 * lam[i]) / l0;
                    }
                }
            }
        }
    }

    /// Largest step in `[0, amax]` keeping `u + α du` inside every cone.
    pub fn step_length(&self, u: &[f64], du: &[f64], amax: f64) -> f64 {
        let mut alpha = amax;
        for (c, o) in self.blocks() {
            match c {
                Cone::Zero(_) => {}
                Cone::NonNeg(d) => {
                    for i in o..o + d {
                        if du[i] < 0.0 {
                            alpha = alpha.min(-u[i] / du[i]);
                        }
                    }
                }
                Cone::Soc(d) => {
                    alpha = alpha.min(soc_step(&u[o..o + d], &du[o..o + d], amax));
                }
            }
        }
        alpha.max(0.0)
    }

    /// Whether `v` is strictly inside every non-zero cone.
    pub fn is_interior(&self, v: &[f64]) -> bool {
        self.blocks().all(|(c, o)| match c {
            Cone::Zero(_) => true,
            Cone::NonNeg(d) => v[o..o + d].iter().all(|&x| x > 0.0),
            Cone::Soc(d) => v[o] > norm2(&v[o + 1..o + d]),
        })
    }

    /// Cone-wise "is in closed cone up to tol" test used for solution checks.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.blocks().all(|(c, o)| match c {
            Cone::Zero(_) => true,
            Cone::NonNeg(d) => v[o..o + d].iter().all(|&x| x >= -tol),
            Cone::Soc(d) => v[o] + tol >= norm2(&v[o + 1..o + d]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(h: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
        (0..d).map(|i| (0..d).map(|j| h[i * d + j] * v[j]).sum()).collect()
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let mut cs = ConeSet::new(&[Cone::NonNeg(2), Cone::Soc(4)]);
        let s = [2.0, 0.5, 3.0, 1.0, -0.5, 0.7];
        let z = [0.3, 4.0, 2.0, -0.4, 0.9, 0.1];
        assert!(cs.update_scaling(&s, &z));
        let mut wz = [0.0; 6];
        let mut wis = [0.0; 6];
        cs.mul_w(&z, &mut wz);
        cs.mul_winv(&s, &mut wis);
        for i in 0..6 {
            assert!((wz[i] - wis[i]).abs() < 1e-12, "{i}: {} vs {}", wz[i], wis[i]);
            assert!((wz[i] - cs.lambda[i]).abs() < 1e-12);
        }
        // H z = s
        let h = cs.hessian_blocks();
        let hz = dense_mul(&h[1], 4, &z[2..]);
        for i in 0..4 {
            assert!((hz[i] - s[2 + i]).abs() < 1e-12);
        }
        // W W⁻¹ = I
        let v = [1.0, -2.0, 0.5, 0.25, -1.0, 3.0];
        let mut t = [0.0; 6];
        let mut back = [0.0; 6];
        cs.mul_winv(&v, &mut t);
        cs.mul_w(&t, &mut back);
        for i in 0..6 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_jordan_product_roundtrip() {
        let cs = ConeSet::new(&[Cone::Soc(3), Cone::NonNeg(1)]);
        let lam = [2.0, 0.5, -0.3, 1.5];
        let r = [0.7, -1.0, 2.0, 3.0];
        let mut x = [0.0; 4];
        let mut back = [0.0; 4];
        cs.inv_circ(&lam, &r, &mut x);
        cs.circ(&lam, &x, &mut back);
        for i in 0..4 {
            assert!((back[i] - r[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_stops_at_boundary() {
        let cs = ConeSet::new(&[Cone::Soc(3)]);
        let u = [1.0, 0.0, 0.0];
        let du = [0.0, 1.0, 0.0];
        let a = cs.step_length(&u, &du, 10.0);
        assert!((a - 1.0).abs() < 1e-12);
        let du2 = [1.0, 0.5, 0.0];
        assert_eq!(cs.step_length(&u, &du2, 10.0), 10.0);
    }
}
