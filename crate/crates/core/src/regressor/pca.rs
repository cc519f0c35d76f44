//! Linear (PCA) pose basis: the classical baseline for structured output.
//!
//! A basis is fit on training poses only.  The CNN regresses the `k`
//! projection coefficients and the reprojection back to pose space is a
//! fixed affine map, which [`stack_pca`] materializes as a single linear
//! decoder layer so the stacked fine-tuning path can treat it exactly like
//! a learned decoder.

use super::cnn::{DenseLayer, ImageEncoderParams};
use super::stacked::StackedNetworkParams;
use crate::autoencoder::Pose;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Orthonormal linear basis for poses, ordered by explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// Training-set mean pose, length `d`.
    mean: Vec<f64>,
    /// Basis rows, shape `[k, d]`; row `i` is the i-th principal direction.
    components: Tensor,
    /// Covariance eigenvalue per component, non-increasing, length `k`.
    explained_variance: Vec<f64>,
}

impl PcaBasis {
    /// Rebuild a basis from raw parts, re-validating shape and sanity.
    pub fn from_parts(
        mean: Vec<f64>,
        components: Tensor,
        explained_variance: Vec<f64>,
    ) -> Result<PcaBasis> {
        let op = "pca_basis";
        let (k, d) = components.dims2(op)?;
        if k == 0 {
            return Err(Error::Parameter {
                op,
                name: "components",
                detail: "need at least one component".into(),
            });
        }
        if mean.len() != d {
            return Err(Error::Dimension {
                op,
                detail: format!("mean length {} does not match component width {d}", mean.len()),
            });
        }
        if explained_variance.len() != k {
            return Err(Error::Dimension {
                op,
                detail: format!(
                    "{} variance entries for {k} components",
                    explained_variance.len()
                ),
            });
        }
        if mean.iter().any(|value| !value.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        for (i, &value) in explained_variance.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Parameter {
                    op,
                    name: "explained_variance",
                    detail: format!("entry {i} is {value}; variances must be finite and >= 0"),
                });
            }
        }
        for row in 0..k {
            let slice = &components.as_slice()[row * d..(row + 1) * d];
            let norm: f64 = slice.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Parameter {
                    op,
                    name: "components",
                    detail: format!("row {row} has norm {norm}; rows must be unit length"),
                });
            }
        }
        Ok(PcaBasis { mean, components, explained_variance })
    }

    /// Number of retained components `k`.
    pub fn component_count(&self) -> usize {
        self.components.shape()[0]
    }

    /// Pose dimension `d` the basis was fit on.
    pub fn input_dim(&self) -> usize {
        self.components.shape()[1]
    }

    /// Training-set mean pose.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Component matrix, shape `[k, d]`.
    pub fn components(&self) -> &Tensor {
        &self.components
    }

    /// Covariance eigenvalues of the retained components, non-increasing.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Project a pose onto the basis: `c = P (y - mean)`.
    pub fn project(&self, pose: &Pose) -> Result<Vec<f64>> {
        let op = "pca_project";
        let d = self.input_dim();
        if pose.dim() != d {
            return Err(Error::Dimension {
                op,
                detail: format!("pose dimension {} does not match basis width {d}", pose.dim()),
            });
        }
        let k = self.component_count();
        let p = self.components.as_slice();
        let y = pose.as_slice();
        let mut coeffs = vec![0.0; k];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..d {
                acc += p[i * d + j] * (y[j] - self.mean[j]);
            }
            *c = acc;
        }
        Ok(coeffs)
    }

    /// Reproject coefficients back to a pose: `y = mean + P^T c`.
    ///
    /// The accumulation order (ascending component index, then added to the
    /// mean) matches a dense layer with weights `P^T` and bias `mean`, so a
    /// basis materialized by [`stack_pca`] reproduces this map bit for bit.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Pose> {
        let op = "pca_reconstruct";
        let k = self.component_count();
        if coeffs.len() != k {
            return Err(Error::Dimension {
                op,
                detail: format!("{} coefficients for a {k}-component basis", coeffs.len()),
            });
        }
        let d = self.input_dim();
        let p = self.components.as_slice();
        let mut out = vec![0.0; d];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &c) in coeffs.iter().enumerate() {
                acc += p[i * d + j] * c;
            }
            *o = self.mean[j] + acc;
        }
        Pose::new(out)
    }
}

/// Fit a `k`-component PCA basis on training poses.
///
/// Uses the sample covariance (divisor `n - 1`) and a cyclic Jacobi
/// eigensolver; components are sorted by descending eigenvalue and each is
/// sign-fixed so its largest-magnitude entry is positive.
pub fn fit_pca(poses: &[Pose], k: usize) -> Result<PcaBasis> {
    let op = "fit_pca";
    let Some(first) = poses.first() else {
        return Err(Error::Parameter {
            op,
            name: "poses",
            detail: "training set is empty".into(),
        });
    };
    let d = first.dim();
    for (i, pose) in poses.iter().enumerate() {
        if pose.dim() != d {
            return Err(Error::Dimension {
                op,
                detail: format!("pose {i} has dimension {}, expected {d}", pose.dim()),
            });
        }
    }
    if k == 0 || k > d {
        return Err(Error::Parameter {
            op,
            name: "k",
            detail: format!("component count must be in 1..={d}, got {k}"),
        });
    }
    let n = poses.len();
    if n < k + 1 {
        return Err(Error::Parameter {
            op,
            name: "poses",
            detail: format!("need at least {} poses for {k} components, got {n}", k + 1),
        });
    }

    let mut mean = vec![0.0; d];
    for pose in poses {
        for (m, &y) in mean.iter_mut().zip(pose.as_slice()) {
            *m += y;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Sample covariance with divisor n - 1.
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for pose in poses {
        for (c, (&y, &m)) in centered.iter_mut().zip(pose.as_slice().iter().zip(&mean)) {
            *c = y - m;
        }
        for r in 0..d {
            let cr = centered[r];
            for q in r..d {
                cov[r * d + q] += cr * centered[q];
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for r in 0..d {
        for q in r..d {
            let value = cov[r * d + q] * scale;
            cov[r * d + q] = value;
            cov[q * d + r] = value;
        }
    }
    let cov = Tensor::from_vec(&[d, d], cov)?;

    let (values, vectors) = jacobi_eigen(&cov)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let mut components = Vec::with_capacity(k * d);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut row = vectors[idx].clone();
        sign_fix(&mut row);
        components.extend_from_slice(&row);
        explained.push(values[idx].max(0.0));
    }
    PcaBasis::from_parts(mean, Tensor::from_vec(&[k, d], components)?, explained)
}

/// Flip a vector so its largest-magnitude entry (earliest on ties) is positive.
fn sign_fix(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, eigenvectors)` where `eigenvectors[j]` is the unit
/// eigenvector for `eigenvalues[j]`, in the matrix's native (unsorted) order.
fn jacobi_eigen(matrix: &Tensor) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let op = "jacobi_eigen";
    let (d, cols) = matrix.dims2(op)?;
    if d != cols {
        return Err(Error::Dimension {
            op,
            detail: format!("matrix is {d}x{cols}, expected square"),
        });
    }
    if d == 0 {
        return Err(Error::Dimension { op, detail: "matrix is empty".into() });
    }
    let mut a = matrix.as_slice().to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-13 * frob.max(1.0);

    let off = |a: &[f64]| -> f64 {
        let mut sum = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                sum += a[p * d + q] * a[p * d + q];
            }
        }
        sum.sqrt()
    };

    let mut converged = false;
    for _sweep in 0..100 {
        if off(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..d {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * d + p];
                    let arq = a[r * d + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[r * d + p] = new_rp;
                    a[p * d + r] = new_rp;
                    a[r * d + q] = new_rq;
                    a[q * d + r] = new_rq;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for r in 0..d {
                    let vrp = v[r * d + p];
                    let vrq = v[r * d + q];
                    v[r * d + p] = c * vrp - s * vrq;
                    v[r * d + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    if !converged && off(&a) > tol {
        return Err(Error::Domain {
            op,
            detail: format!(
                "Jacobi sweep limit reached with off-diagonal norm {:.3e} (tolerance {:.3e})",
                off(&a),
                tol
            ),
        });
    }

    let values: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    let vectors: Vec<Vec<f64>> =
        (0..d).map(|j| (0..d).map(|r| v[r * d + j]).collect()).collect();
    Ok((values, vectors))
}

/// Combine a coefficient-regressing CNN with a PCA basis into a stacked
/// network whose single linear decoder layer performs the reprojection.
pub fn stack_pca(cnn: ImageEncoderParams, basis: &PcaBasis) -> Result<StackedNetworkParams> {
    if cnn.output_dim() != basis.component_count() {
        return Err(Error::Dimension {
            op: "stack_pca",
            detail: format!(
                "CNN output dimension {} vs PCA component count {}",
                cnn.output_dim(),
                basis.component_count()
            ),
        });
    }
    let layer = DenseLayer {
        weights: basis.components.transposed()?,
        bias: Tensor::vector(basis.mean.clone())?,
    };
    StackedNetworkParams::from_parts(cnn, vec![layer])
}
