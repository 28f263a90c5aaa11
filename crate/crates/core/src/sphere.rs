//! Discretization of the unit sphere.
//!
//! Nodes are the tensor product of `L` Gauss–Legendre colatitudes and `2L`
//! equispaced longitudes, stored colatitude-major (`index = ring * 2L + k`).
//! Fields are expanded in the orthonormal real spherical harmonics of degree
//! `l <= L - 1`; on that band the quadrature is exact for products of two
//! basis functions, so analysis and synthesis are mutually inverse.
//!
//! Derivatives are pseudo-spectral: every field is analyzed, then the
//! analytically differentiated basis is synthesized back on the nodes. The
//! covariant Hessian is returned in the per-node orthonormal frame
//! `(e_theta, e_phi)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::fmt_f64;

/// Smallest supported bandwidth.
pub const MIN_BANDWIDTH: usize = 4;

/// Default bandwidth used by the solvers and the CLI.
pub const DEFAULT_BANDWIDTH: usize = 16;

/// Symmetric 2x2 tensor in the node frame `(e_theta, e_phi)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameTensor {
    pub tt: f64,
    pub tp: f64,
    pub pp: f64,
}

impl FrameTensor {
    pub fn trace(&self) -> f64 {
        self.tt + self.pp
    }

    pub fn det(&self) -> f64 {
        self.tt * self.pp - self.tp * self.tp
    }

    /// Smaller eigenvalue.
    pub fn min_eig(&self) -> f64 {
        let mean = 0.5 * (self.tt + self.pp);
        let half_diff = 0.5 * (self.tt - self.pp);
        mean - half_diff.hypot(self.tp)
    }

    /// Adds `s` to the diagonal.
    pub fn shifted(&self, s: f64) -> FrameTensor {
        FrameTensor { tt: self.tt + s, tp: self.tp, pp: self.pp + s }
    }
}

#[derive(Debug)]
pub struct SphericalGrid {
    bandwidth: usize,
    colatitudes: Vec<f64>,
    longitudes: Vec<f64>,
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    frames: Vec<[Vector3<f64>; 2]>,
    degrees: Vec<usize>,
    /// N x B: basis values at nodes.
    synth: DMatrix<f64>,
    /// B x N: quadrature-weighted transpose of `synth`.
    analysis: DMatrix<f64>,
    grad_t: DMatrix<f64>,
    grad_p: DMatrix<f64>,
    hess_tt: DMatrix<f64>,
    hess_tp: DMatrix<f64>,
    hess_pp: DMatrix<f64>,
}

impl PartialEq for SphericalGrid {
    fn eq(&self, other: &Self) -> bool {
        self.bandwidth == other.bandwidth
    }
}

impl SphericalGrid {
    /// Builds the grid of bandwidth `l` (`l * 2l` nodes, harmonics up to degree `l - 1`).
    pub fn build(bandwidth: usize) -> Result<Arc<SphericalGrid>> {
        if bandwidth < MIN_BANDWIDTH {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be at least {MIN_BANDWIDTH}, got {bandwidth}"
            )));
        }
        let n_lat = bandwidth;
        let n_lon = 2 * bandwidth;
        let (xs, gw) = gauss_legendre(n_lat);
        let colatitudes: Vec<f64> = xs.iter().map(|x| x.acos()).collect();
        let longitudes: Vec<f64> = (0..n_lon).map(|k| PI * k as f64 / bandwidth as f64).collect();
        let dphi = 2.0 * PI / n_lon as f64;

        let n = n_lat * n_lon;
        let lmax = bandwidth - 1;
        let b = bandwidth * bandwidth;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut frames = Vec::with_capacity(n);
        let mut synth = DMatrix::zeros(n, b);
        let mut grad_t = DMatrix::zeros(n, b);
        let mut grad_p = DMatrix::zeros(n, b);
        let mut hess_tt = DMatrix::zeros(n, b);
        let mut hess_tp = DMatrix::zeros(n, b);
        let mut hess_pp = DMatrix::zeros(n, b);

        for (j, &theta) in colatitudes.iter().enumerate() {
            let (s, c) = theta.sin_cos();
            let cot = c / s;
            let legendre = NormalizedLegendre::new(lmax, theta);
            for (k, &phi) in longitudes.iter().enumerate() {
                let i = j * n_lon + k;
                let (sp, cp) = phi.sin_cos();
                nodes.push(Vector3::new(s * cp, s * sp, c));
                weights.push(gw[j] * dphi);
                frames.push([Vector3::new(c * cp, c * sp, -s), Vector3::new(-sp, cp, 0.0)]);
                for l in 0..=lmax {
                    let ll = (l * (l + 1)) as f64;
                    for m in -(l as i64)..=(l as i64) {
                        let idx = basis_index(l, m);
                        let d = basis_derivatives(&legendre, l, m, phi);
                        let mf2 = (m * m) as f64;
                        let d_tt = -cot * d.dt - (ll - mf2 / (s * s)) * d.val;
                        let d_pp = -mf2 * d.val;
                        synth[(i, idx)] = d.val;
                        grad_t[(i, idx)] = d.dt;
                        grad_p[(i, idx)] = d.dp / s;
                        hess_tt[(i, idx)] = d_tt;
                        hess_tp[(i, idx)] = (d.dtp - cot * d.dp) / s;
                        hess_pp[(i, idx)] = d_pp / (s * s) + cot * d.dt;
                    }
                }
            }
        }
        let mut analysis = synth.transpose();
        for (col, w) in weights.iter().enumerate() {
            analysis.column_mut(col).scale_mut(*w);
        }
        let degrees = (0..b).map(|idx| (idx as f64).sqrt().floor() as usize).collect();

        Ok(Arc::new(SphericalGrid {
            bandwidth,
            colatitudes,
            longitudes,
            nodes,
            weights,
            frames,
            degrees,
            synth,
            analysis,
            grad_t,
            grad_p,
            hess_tt,
            hess_tp,
            hess_pp,
        }))
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Highest harmonic degree represented on this grid (`L - 1`).
    pub fn max_degree(&self) -> usize {
        self.bandwidth - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.bandwidth * self.bandwidth
    }

    pub fn n_lon(&self) -> usize {
        self.longitudes.len()
    }

    pub fn nodes(&self) -> &[Vector3<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Orthonormal tangent frame `(e_theta, e_phi)` at node `i`.
    pub fn frame(&self, i: usize) -> [Vector3<f64>; 2] {
        self.frames[i]
    }

    /// `(colatitude, longitude)` of node `i`.
    pub fn angles(&self, i: usize) -> (f64, f64) {
        let n_lon = self.n_lon();
        (self.colatitudes[i / n_lon], self.longitudes[i % n_lon])
    }

    /// Harmonic degree of basis index `idx`.
    pub fn degree_of(&self, idx: usize) -> usize {
        self.degrees[idx]
    }

    pub(crate) fn synth_matrix(&self) -> &DMatrix<f64> {
        &self.synth
    }

    pub(crate) fn analysis_matrix(&self) -> &DMatrix<f64> {
        &self.analysis
    }

    pub(crate) fn hessian_matrices(&self) -> [&DMatrix<f64>; 3] {
        [&self.hess_tt, &self.hess_tp, &self.hess_pp]
    }

    fn check_same(&self, other: &SphericalGrid) -> Result<()> {
        if self.bandwidth != other.bandwidth {
            return Err(Error::InvalidParameter(format!(
                "grid mismatch: bandwidth {} vs {}",
                self.bandwidth, other.bandwidth
            )));
        }
        Ok(())
    }

    /// Quadrature sum `sum_i w_i v_i`.
    pub fn integrate(&self, field: &ScalarField) -> f64 {
        self.weights.iter().zip(field.values()).map(|(w, v)| w * v).sum()
    }

    pub fn analyze(&self, field: &ScalarField) -> Result<HarmonicCoeffs> {
        self.check_same(field.grid())?;
        let c = &self.analysis * DVector::from_column_slice(field.values());
        Ok(HarmonicCoeffs { bandwidth: self.bandwidth, data: c.as_slice().to_vec() })
    }

    pub fn synthesize(self: &Arc<Self>, coeffs: &HarmonicCoeffs) -> Result<ScalarField> {
        if coeffs.bandwidth != self.bandwidth {
            return Err(Error::InvalidParameter(format!(
                "coefficient bandwidth {} does not match grid bandwidth {}",
                coeffs.bandwidth, self.bandwidth
            )));
        }
        let v = &self.synth * DVector::from_column_slice(&coeffs.data);
        Ok(ScalarField { grid: Arc::clone(self), values: v.as_slice().to_vec() })
    }

    /// Band-limited projection of a field (analysis followed by synthesis).
    pub fn project(self: &Arc<Self>, field: &ScalarField) -> Result<ScalarField> {
        let c = self.analyze(field)?;
        self.synthesize(&c)
    }

    pub fn laplace_beltrami(self: &Arc<Self>, field: &ScalarField) -> Result<ScalarField> {
        let mut c = self.analyze(field)?;
        for (idx, v) in c.data.iter_mut().enumerate() {
            let l = self.degrees[idx] as f64;
            *v *= -l * (l + 1.0);
        }
        self.synthesize(&c)
    }

    /// Covariant Hessian of the band-limited part of `field`, per node, in the node frame.
    pub fn covariant_hessian(&self, field: &ScalarField) -> Result<Vec<FrameTensor>> {
        let c = self.analyze(field)?;
        Ok(self.hessian_from_coeffs(&c.data))
    }

    pub(crate) fn hessian_from_coeffs(&self, c: &[f64]) -> Vec<FrameTensor> {
        let c = DVector::from_column_slice(c);
        let tt = &self.hess_tt * &c;
        let tp = &self.hess_tp * &c;
        let pp = &self.hess_pp * &c;
        (0..self.n_nodes())
            .map(|i| FrameTensor { tt: tt[i], tp: tp[i], pp: pp[i] })
            .collect()
    }

    /// Surface gradient of the band-limited part of `field`, as ambient vectors.
    pub fn gradient(&self, field: &ScalarField) -> Result<Vec<Vector3<f64>>> {
        let c = DVector::from_column_slice(&self.analyze(field)?.data);
        let gt = &self.grad_t * &c;
        let gp = &self.grad_p * &c;
        Ok((0..self.n_nodes())
            .map(|i| self.frames[i][0] * gt[i] + self.frames[i][1] * gp[i])
            .collect())
    }

    /// Node permutation induced by rotating the sphere about `e3` by `shift` grid
    /// longitudes: `result[i]` is the node that `i` is carried onto.
    pub fn longitude_shift(&self, shift: usize) -> Vec<usize> {
        let n_lon = self.n_lon();
        (0..self.n_nodes())
            .map(|i| (i / n_lon) * n_lon + (i % n_lon + shift) % n_lon)
            .collect()
    }
}

/// Index of `(l, m)` in a coefficient vector: `l^2 + l + m`.
pub fn basis_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

/// Function values on the grid nodes.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<SphericalGrid>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.bandwidth == other.grid.bandwidth && self.values == other.values
    }
}

impl ScalarField {
    pub fn from_values(grid: &Arc<SphericalGrid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {i}")));
        }
        Ok(ScalarField { grid: Arc::clone(grid), values })
    }

    pub fn from_fn(grid: &Arc<SphericalGrid>, f: impl Fn(&Vector3<f64>) -> f64) -> ScalarField {
        let values = grid.nodes.iter().map(f).collect();
        ScalarField { grid: Arc::clone(grid), values }
    }

    pub fn constant(grid: &Arc<SphericalGrid>, c: f64) -> ScalarField {
        ScalarField { grid: Arc::clone(grid), values: vec![c; grid.n_nodes()] }
    }

    /// The orthonormal real harmonic `Y_l^m` sampled on the grid.
    pub fn harmonic(grid: &Arc<SphericalGrid>, l: usize, m: i64) -> ScalarField {
        let values = (0..grid.n_nodes())
            .map(|i| {
                let (t, p) = grid.angles(i);
                real_harmonic(l, m, t, p)
            })
            .collect();
        ScalarField { grid: Arc::clone(grid), values }
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: Arc::clone(&self.grid), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Ok(ScalarField { grid: Arc::clone(&self.grid), values })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.axpy(-1.0, other)
    }

    /// Largest nodewise absolute difference.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Reorders values so that `result[perm[i]] = self[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ScalarField {
        let mut values = vec![0.0; self.values.len()];
        for (i, &j) in perm.iter().enumerate() {
            values[j] = self.values[i];
        }
        ScalarField { grid: Arc::clone(&self.grid), values }
    }

    /// CSV rows `theta,phi,value` in node order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,phi,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let (t, p) = self.grid.angles(i);
            let _ = writeln!(out, "{},{},{}", fmt_f64(t), fmt_f64(p), fmt_f64(*v));
        }
        out
    }

    /// Parses the CSV produced by [`ScalarField::to_csv`]; the node angles must match the grid.
    pub fn from_csv(grid: &Arc<SphericalGrid>, text: &str) -> Result<ScalarField> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "theta,phi,value" => {}
            other => return Err(Error::Parse(format!("unexpected field CSV header {other:?}"))),
        }
        let mut values = Vec::with_capacity(grid.n_nodes());
        for (i, line) in lines.enumerate() {
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {i}: {e}")))?;
            if cols.len() != 3 {
                return Err(Error::Parse(format!("row {i}: expected 3 columns")));
            }
            if i >= grid.n_nodes() {
                return Err(Error::Parse("more rows than grid nodes".into()));
            }
            let (t, p) = grid.angles(i);
            if (cols[0] - t).abs() > 1e-9 || (cols[1] - p).abs() > 1e-9 {
                return Err(Error::Parse(format!("row {i}: node angles do not match grid")));
            }
            values.push(cols[2]);
        }
        ScalarField::from_values(grid, values)
    }
}

/// Coefficients in the orthonormal real harmonic basis, degrees `0..bandwidth`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicCoeffs {
    bandwidth: usize,
    data: Vec<f64>,
}

impl HarmonicCoeffs {
    pub fn zeros(bandwidth: usize) -> HarmonicCoeffs {
        HarmonicCoeffs { bandwidth, data: vec![0.0; bandwidth * bandwidth] }
    }

    pub fn from_vec(bandwidth: usize, data: Vec<f64>) -> Result<HarmonicCoeffs> {
        if data.len() != bandwidth * bandwidth {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients for bandwidth {bandwidth}, got {}",
                bandwidth * bandwidth,
                data.len()
            )));
        }
        Ok(HarmonicCoeffs { bandwidth, data })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        self.data[basis_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, v: f64) {
        let idx = basis_index(l, m);
        self.data[idx] = v;
    }

    /// Largest absolute coefficient of degree `l`.
    pub fn degree_max(&self, l: usize) -> f64 {
        (-(l as i64)..=l as i64).map(|m| self.get(l, m).abs()).fold(0.0, f64::max)
    }
}

/// Fully normalized associated Legendre functions `P(l, m)` (no Condon–Shortley
/// phase) and their colatitude derivatives at one colatitude.
struct NormalizedLegendre {
    lmax: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
}

impl NormalizedLegendre {
    fn new(lmax: usize, theta: f64) -> NormalizedLegendre {
        let (s, x) = theta.sin_cos();
        let w = lmax + 1;
        let mut p = vec![0.0; w * w];
        let mut dp = vec![0.0; w * w];
        let at = |l: usize, m: usize| l * w + m;
        let mut pmm = (1.0 / (4.0 * PI)).sqrt();
        for m in 0..=lmax {
            if m > 0 {
                pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            }
            p[at(m, m)] = pmm;
            if m < lmax {
                p[at(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * pmm;
            }
            for l in (m + 2)..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                p[at(l, m)] = a * (x * p[at(l - 1, m)] - b * p[at(l - 2, m)]);
            }
        }
        // sin(t) dP/dt = l cos(t) P(l,m) - sqrt((2l+1)(l^2-m^2)/(2l-1)) P(l-1,m)
        for l in 0..=lmax {
            for m in 0..=l {
                let (lf, mf) = (l as f64, m as f64);
                let lower = if l > m {
                    ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[at(l - 1, m)]
                } else {
                    0.0
                };
                dp[at(l, m)] = (lf * x * p[at(l, m)] - lower) / s;
            }
        }
        NormalizedLegendre { lmax, p, dp }
    }

    fn get(&self, l: usize, m: usize) -> (f64, f64) {
        let w = self.lmax + 1;
        (self.p[l * w + m], self.dp[l * w + m])
    }
}

struct BasisDerivs {
    val: f64,
    dt: f64,
    dp: f64,
    dtp: f64,
}

fn basis_derivatives(leg: &NormalizedLegendre, l: usize, m: i64, phi: f64) -> BasisDerivs {
    let am = m.unsigned_abs() as usize;
    let (p, dpt) = leg.get(l, am);
    if m == 0 {
        return BasisDerivs { val: p, dt: dpt, dp: 0.0, dtp: 0.0 };
    }
    let mf = am as f64;
    let (sn, cs) = (mf * phi).sin_cos();
    let r2 = std::f64::consts::SQRT_2;
    if m > 0 {
        BasisDerivs { val: r2 * p * cs, dt: r2 * dpt * cs, dp: -r2 * mf * p * sn, dtp: -r2 * mf * dpt * sn }
    } else {
        BasisDerivs { val: r2 * p * sn, dt: r2 * dpt * sn, dp: r2 * mf * p * cs, dtp: r2 * mf * dpt * cs }
    }
}

/// Orthonormal real spherical harmonic `Y_l^m(theta, phi)`; `m < 0` selects the sine branch.
pub fn real_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> f64 {
    let leg = NormalizedLegendre::new(l, theta);
    basis_derivatives(&leg, l, m, phi).val
}

/// Ratio between the orthonormal and the Schmidt semi-normalized harmonic of
/// degree `l`: `Y_l^m = sqrt((2l+1)/4pi) * S_l^m`. With this convention
/// `S_1^0 = u.e3`, `S_1^1 = u.e1`, `S_1^-1 = u.e2`.
pub fn schmidt_to_orthonormal(l: usize) -> f64 {
    (4.0 * PI / (2 * l + 1) as f64).sqrt()
}

/// Gauss–Legendre nodes (descending, so colatitudes ascend) and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}
