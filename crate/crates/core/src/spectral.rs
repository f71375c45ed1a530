//! One-dimensional spectral oracle for `(−Δ)^{α/2} + V` on `[−L, L]`.
//!
//! The fractional Laplacian is discretized by fractional centered differences
//! on `N` nodes with zero exterior values. The resulting dense symmetric matrix
//! is diagonalized once; kernels and Green functions are synthesized from the
//! lowest `K` eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::envelopes::ground_state_h;
use crate::error::{check_alpha, check_positive, Error, Result};
use crate::profiles::PotentialProfile;

/// Default half-width of the box.
pub const DEFAULT_L: f64 = 20.0;
/// Default number of grid nodes.
pub const DEFAULT_N: usize = 1024;
/// Default number of retained modes.
pub const DEFAULT_K: usize = 400;
const MAX_SWEEPS: usize = 10_000;
const CACHE_MAGIC: &[u8; 8] = b"FHSPEC01";

/// Fractional centered-difference weights `w_0, …, w_{n−1}`:
/// `w_k = (−1)^k Γ(α+1)/(Γ(α/2−k+1)Γ(α/2+k+1))`, by the stable ratio recurrence.
pub fn fractional_weights(alpha: f64, n: usize) -> Vec<f64> {
    let g = statrs::function::gamma::gamma;
    let mut w = Vec::with_capacity(n);
    if n == 0 {
        return w;
    }
    let half = alpha / 2.0;
    w.push(g(alpha + 1.0) / (g(half + 1.0) * g(half + 1.0)));
    for k in 0..n.saturating_sub(1) {
        let k = k as f64;
        let prev = w[w.len() - 1];
        w.push(prev * (k - half) / (k + half + 1.0));
    }
    w
}

/// Grid nodes `x_i = −L + i·h`, `h = 2L/(N−1)`.
pub fn grid(l: f64, n: usize) -> Vec<f64> {
    let h = 2.0 * l / (n - 1) as f64;
    (0..n).map(|i| -l + i as f64 * h).collect()
}

/// Index of the node of `grid(l, n)` nearest to `x`, clamped to the box.
pub fn nearest_node(l: f64, n: usize, x: f64) -> usize {
    let h = 2.0 * l / (n - 1) as f64;
    (((x + l) / h).round().max(0.0) as usize).min(n - 1)
}

fn check_grid(l: f64, n: usize, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    check_positive("L", l)?;
    if n < 64 {
        return Err(Error::InvalidParameter {
            name: "N",
            value: n as f64,
            reason: "at least 64 grid nodes are required",
        });
    }
    Ok(())
}

/// `A = F + diag(V(x_i))` with `F_ij = h^{−α} w_{|i−j|}`.
pub fn build_operator(l: f64, n: usize, alpha: f64, profile: &PotentialProfile) -> Result<DMatrix<f64>> {
    check_grid(l, n, alpha)?;
    if profile.dimension() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: profile.dimension(),
        });
    }
    let h = 2.0 * l / (n - 1) as f64;
    let scale = h.powf(-alpha);
    let w: Vec<f64> = fractional_weights(alpha, n).into_iter().map(|v| v * scale).collect();
    let xs = grid(l, n);
    let v: Vec<f64> = xs.iter().map(|&x| profile.potential(&[x])).collect();
    if let Some((i, bad)) = v.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Precondition(format!(
            "potential is not finite at x = {}: {bad}",
            xs[i]
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let off = w[i.abs_diff(j)];
        if i == j {
            off + v[i]
        } else {
            off
        }
    }))
}

/// Lowest `k` eigenvalues of a symmetric matrix, ascending (no eigenvectors).
pub fn lowest_eigenvalues(a: DMatrix<f64>, k: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(k);
    ev
}

/// Diagnostics collected while using a model.
#[derive(Debug, Default)]
pub struct SpectralDiagnostics {
    /// `V(L)/λ₁`, a proxy for how strongly the box edge is suppressed.
    pub edge_potential_ratio: f64,
    clipped: AtomicUsize,
}

impl SpectralDiagnostics {
    /// Kernel syntheses clipped at zero so far.
    pub fn clipped(&self) -> usize {
        self.clipped.load(Ordering::Relaxed)
    }
}

/// A synthesized kernel value with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub clipped: bool,
    /// `K e^{−(λ_K − λ₁)t}`: the discarded tail relative to the leading mode.
    pub truncation_ratio: f64,
}

/// Eigenpairs of the discretized operator.
#[derive(Debug)]
pub struct SpectralModel {
    pub l: f64,
    pub n: usize,
    pub h: f64,
    pub alpha: f64,
    pub profile: PotentialProfile,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `N × K`, columns grid-orthonormal: `Σ_i φ_n(x_i) φ_m(x_i) h = δ_nm`.
    pub eigenfunctions: DMatrix<f64>,
    pub k: usize,
    pub diagnostics: SpectralDiagnostics,
}

/// Diagonalizes `a` and keeps the lowest `k` modes.
pub fn eigendecompose(
    a: DMatrix<f64>,
    k: usize,
    l: f64,
    alpha: f64,
    profile: &PotentialProfile,
) -> Result<SpectralModel> {
    let n = a.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter {
            name: "K",
            value: k as f64,
            reason: "must lie in 1..=N",
        });
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, MAX_SWEEPS).ok_or(Error::EigenNoConvergence {
        max_iterations: MAX_SWEEPS,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order.truncate(k);
    let h = 2.0 * l / (n - 1) as f64;
    let inv_sqrt_h = h.sqrt().recip();
    let mut phi = DMatrix::zeros(n, k);
    for (col, &src) in order.iter().enumerate() {
        phi.set_column(col, &(eig.eigenvectors.column(src) * inv_sqrt_h));
    }
    if phi[(n / 2, 0)] < 0.0 {
        phi.column_mut(0).neg_mut();
    }
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let edge_potential_ratio = profile.potential(&[l]) / eigenvalues[0];
    Ok(SpectralModel {
        l,
        n,
        h,
        alpha,
        profile: profile.clone(),
        eigenvalues,
        eigenfunctions: phi,
        k,
        diagnostics: SpectralDiagnostics {
            edge_potential_ratio,
            clipped: AtomicUsize::new(0),
        },
    })
}

impl SpectralModel {
    /// Assembles and diagonalizes the operator.
    pub fn build(l: f64, n: usize, k: usize, alpha: f64, profile: &PotentialProfile) -> Result<Self> {
        let a = build_operator(l, n, alpha, profile)?;
        eigendecompose(a, k, l, alpha, profile)
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.h
    }

    /// Index of the grid node nearest to `x`, clamped to the box.
    pub fn node_index(&self, x: f64) -> usize {
        nearest_node(self.l, self.n, x)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn truncation_ratio(&self, t: f64) -> f64 {
        let lk = self.eigenvalues[self.k - 1];
        self.k as f64 * (-(lk - self.eigenvalues[0]) * t).exp()
    }

    /// `Σ_n e^{−λ_n t} φ_n(x_i) φ_n(x_j)` with diagnostics; negative values are clipped to 0.
    pub fn kernel_value(&self, t: f64, i: usize, j: usize) -> KernelValue {
        let phi = &self.eigenfunctions;
        let mut sum = 0.0;
        for (n, &lam) in self.eigenvalues.iter().enumerate() {
            sum += (-lam * t).exp() * (phi[(i, n)] * phi[(j, n)]);
        }
        let clipped = sum < 0.0;
        if clipped {
            self.diagnostics.clipped.fetch_add(1, Ordering::Relaxed);
        }
        KernelValue {
            value: sum.max(0.0),
            clipped,
            truncation_ratio: self.truncation_ratio(t),
        }
    }

    /// `p(t, x_i, x_j)`.
    pub fn kernel(&self, t: f64, i: usize, j: usize) -> f64 {
        self.kernel_value(t, i, j).value
    }

    /// `p(t, x, y)` at the nodes nearest to `x` and `y`.
    pub fn kernel_at(&self, t: f64, x: f64, y: f64) -> f64 {
        self.kernel(t, self.node_index(x), self.node_index(y))
    }

    /// `p(t, x_i, ·)` on the whole grid, without clipping.
    pub fn kernel_row(&self, t: f64, i: usize) -> Vec<f64> {
        let coeffs = nalgebra::DVector::from_iterator(
            self.k,
            self.eigenvalues
                .iter()
                .enumerate()
                .map(|(n, &lam)| (-lam * t).exp() * self.eigenfunctions[(i, n)]),
        );
        (&self.eigenfunctions * coeffs).iter().copied().collect()
    }

    /// `Σ_n φ_n(x_i) φ_n(x_j)/λ_n` and the tail bound `K |φ|²_∞ / λ_K`.
    pub fn green(&self, i: usize, j: usize) -> (f64, f64) {
        let phi = &self.eigenfunctions;
        let value = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(n, &lam)| phi[(i, n)] * phi[(j, n)] / lam)
            .sum();
        let sup = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tail = self.k as f64 * sup * sup / self.eigenvalues[self.k - 1];
        (value, tail)
    }

    pub fn green_at(&self, x: f64, y: f64) -> f64 {
        self.green(self.node_index(x), self.node_index(y)).0
    }

    /// `(λ₁, φ₁)` on the grid.
    pub fn ground_state(&self) -> (f64, Vec<f64>) {
        (
            self.eigenvalues[0],
            self.eigenfunctions.column(0).iter().copied().collect(),
        )
    }

    /// `(x_i, φ₁(x_i)/H(x_i))` for `|x_i| ≤ radius`.
    pub fn ground_state_ratios(&self, radius: f64) -> Vec<(f64, f64)> {
        let phi = self.eigenfunctions.column(0);
        (0..self.n)
            .map(|i| (self.node(i), phi[i]))
            .filter(|(x, _)| x.abs() <= radius)
            .map(|(x, p)| (x, p / ground_state_h(&self.profile, self.alpha, &[x])))
            .collect()
    }

    /// Max/min of `φ₁/H` over `|x| ≤ radius`.
    pub fn ground_state_spread(&self, radius: f64) -> f64 {
        let r = self.ground_state_ratios(radius);
        let max = r.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let min = r.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        max / min
    }

    /// Writes the model to a little-endian binary cache file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let json = serde_json::to_vec(&self.profile).map_err(|e| Error::Cache(e.to_string()))?;
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&self.l.to_le_bytes())?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.k as u64).to_le_bytes())?;
        out.write_all(&self.alpha.to_le_bytes())?;
        out.write_all(&self.profile.fingerprint())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for v in &self.eigenvalues {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.eigenfunctions.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a cache file written by [`SpectralModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("not a spectral model cache".into()));
        }
        let l = read_f64(&mut input)?;
        let n = read_u64(&mut input)? as usize;
        let k = read_u64(&mut input)? as usize;
        let alpha = read_f64(&mut input)?;
        let mut hash = [0u8; 32];
        input.read_exact(&mut hash)?;
        let json_len = read_u64(&mut input)? as usize;
        if json_len > 1 << 24 || k > n || n > 1 << 16 {
            return Err(Error::Cache("corrupt header".into()));
        }
        let mut json = vec![0u8; json_len];
        input.read_exact(&mut json)?;
        let profile: PotentialProfile =
            serde_json::from_slice(&json).map_err(|e| Error::Cache(e.to_string()))?;
        if profile.fingerprint() != hash {
            return Err(Error::Cache("profile hash mismatch".into()));
        }
        let mut eigenvalues = Vec::with_capacity(k);
        for _ in 0..k {
            eigenvalues.push(read_f64(&mut input)?);
        }
        let mut data = Vec::with_capacity(n * k);
        for _ in 0..n * k {
            data.push(read_f64(&mut input)?);
        }
        let edge_potential_ratio = profile.potential(&[l]) / eigenvalues[0];
        Ok(SpectralModel {
            l,
            n,
            h: 2.0 * l / (n - 1) as f64,
            alpha,
            profile,
            eigenvalues,
            eigenfunctions: DMatrix::from_vec(n, k, data),
            k,
            diagnostics: SpectralDiagnostics {
                edge_potential_ratio,
                clipped: AtomicUsize::new(0),
            },
        })
    }

    /// Whether a cached model was built from exactly these inputs.
    pub fn matches(&self, l: f64, n: usize, k: usize, alpha: f64, profile: &PotentialProfile) -> bool {
        self.l == l && self.n == n && self.k == k && self.alpha == alpha && self.profile.fingerprint() == profile.fingerprint()
    }
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
