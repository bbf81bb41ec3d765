//! The four closed-form weight vectors.
//!
//! ```text
//! θ̂₁      = Xᵀ(XXᵀ)⁻¹Y
//! θ̂₂      = θ̂₁ + X̃ᵀ(X̃X̃ᵀ)⁻¹(Ỹ − X̃θ̂₁)
//! θ̂_λ     = θ̂₁ + X̃ᵀ(X̃X̃ᵀ + nλI)⁻¹(Ỹ − X̃θ̂₁)
//! θ̂_λ^τ   = (1 − τ)θ̂₁ + τθ̂_λ
//! ```
//!
//! `n` in the ridge shift is the number of fine-tuning rows. Only n×n Gram
//! matrices are factored.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::synth::SampledInstance;

/// Which estimator, with its hyper-parameters.
///
/// All four sit in one `(τ, λ)` family: pretrained is `τ = 0`, ridgeless is
/// `τ = 1, λ = 0`, ridge is `τ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum EstimatorKind {
    Pretrained,
    #[serde(rename = "ridgeless_ft")]
    Ridgeless,
    #[serde(rename = "ridge_ft")]
    Ridge { lambda: f64 },
    Ensemble { lambda: f64, tau: f64 },
}

impl EstimatorKind {
    pub fn tau(&self) -> f64 {
        match *self {
            EstimatorKind::Pretrained => 0.0,
            EstimatorKind::Ridgeless | EstimatorKind::Ridge { .. } => 1.0,
            EstimatorKind::Ensemble { tau, .. } => tau,
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            EstimatorKind::Pretrained | EstimatorKind::Ridgeless => 0.0,
            EstimatorKind::Ridge { lambda } | EstimatorKind::Ensemble { lambda, .. } => lambda,
        }
    }

    /// Name used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Pretrained => "pretrained",
            EstimatorKind::Ridgeless => "ridgeless_ft",
            EstimatorKind::Ridge { .. } => "ridge_ft",
            EstimatorKind::Ensemble { .. } => "ensemble",
        }
    }

    /// λ column value, or `None` where λ has no meaning.
    pub fn lambda_field(&self) -> Option<f64> {
        match *self {
            EstimatorKind::Ridge { lambda } | EstimatorKind::Ensemble { lambda, .. } => Some(lambda),
            _ => None,
        }
    }

    /// τ column value, or `None` where τ has no meaning.
    pub fn tau_field(&self) -> Option<f64> {
        match *self {
            EstimatorKind::Ensemble { tau, .. } => Some(tau),
            _ => None,
        }
    }

    /// The fine-tuned endpoint `θ̂` this kind combines with `θ̂₁`.
    pub fn uses_finetune(&self) -> bool {
        !matches!(self, EstimatorKind::Pretrained)
    }

    pub fn validate(&self, allow_extrapolation: bool) -> Result<()> {
        let lambda = self.lambda();
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::validation("lambda", format!("must be finite and ≥ 0, got {lambda}")));
        }
        let tau = self.tau();
        if !tau.is_finite() || (!allow_extrapolation && !(0.0..=1.0).contains(&tau)) {
            return Err(Error::validation("tau", format!("must lie in [0, 1], got {tau}")));
        }
        Ok(())
    }
}

/// How a weight vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(flatten)]
    pub kind: EstimatorKind,
    /// Diagonal jitter added to any Gram on the way, 0 when none.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: DVector<f64>,
    pub provenance: Provenance,
}

impl WeightVector {
    pub fn kind(&self) -> EstimatorKind {
        self.provenance.kind
    }

    pub fn lambda(&self) -> Option<f64> {
        self.provenance.kind.lambda_field()
    }

    pub fn tau(&self) -> Option<f64> {
        self.provenance.kind.tau_field()
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Dump as `index,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["index", "value"]).map_err(|e| csv_io(path, e))?;
        for (i, v) in self.weights.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()])
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Add `1e-12·tr(G)/n` to an ill-conditioned unregularized Gram instead of failing.
    pub jitter: bool,
    /// Accept τ outside [0, 1].
    pub allow_extrapolation: bool,
}

/// Gram matrix `AAᵀ` of one design with its factorizations cached by shift.
#[derive(Debug)]
pub struct GramCache {
    gram: DMatrix<f64>,
    factors: Mutex<BTreeMap<u64, Arc<SpdFactor>>>,
}

impl GramCache {
    pub fn new(design: &DMatrix<f64>) -> Self {
        Self::from_gram(design * design.transpose())
    }

    pub fn from_gram(gram: DMatrix<f64>) -> Self {
        GramCache {
            gram,
            factors: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn rows(&self) -> usize {
        self.gram.nrows()
    }

    /// Factor of `G + shift·I`, computed once per distinct shift.
    pub fn factor(&self, shift: f64, jitter: bool) -> Result<Arc<SpdFactor>> {
        let key = shift.to_bits() ^ u64::from(jitter);
        if let Some(f) = self.factors.lock().unwrap().get(&key) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(SpdFactor::new(&self.gram, shift, jitter)?);
        self.factors.lock().unwrap().insert(key, Arc::clone(&f));
        Ok(f)
    }

    pub fn cached(&self) -> usize {
        self.factors.lock().unwrap().len()
    }
}

fn check_finite(v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation("weights", "non-finite entries in solution"))
    }
}

fn check_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

fn minnorm_with(cache: &GramCache, x: &DMatrix<f64>, y: &DVector<f64>, jitter: bool) -> Result<(DVector<f64>, f64)> {
    check_rows(x, y)?;
    let f = cache.factor(0.0, jitter)?;
    let w = x.tr_mul(&f.solve_vec(y));
    check_finite(&w)?;
    Ok((w, f.jitter))
}

fn correction_with(
    cache: &GramCache,
    theta1: &DVector<f64>,
    xt: &DMatrix<f64>,
    yt: &DVector<f64>,
    lambda: f64,
    jitter: bool,
) -> Result<(DVector<f64>, f64)> {
    check_rows(xt, yt)?;
    if xt.ncols() != theta1.len() {
        return Err(Error::Dimension(format!(
            "fine-tune design has {} columns but θ̂₁ has {} entries",
            xt.ncols(),
            theta1.len()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::validation("lambda", format!("must be finite and ≥ 0, got {lambda}")));
    }
    let f = cache.factor(xt.nrows() as f64 * lambda, jitter)?;
    let residual = yt - xt * theta1;
    let w = theta1 + xt.tr_mul(&f.solve_vec(&residual));
    check_finite(&w)?;
    Ok((w, f.jitter))
}

/// `θ̂₁ = Xᵀ(XXᵀ)⁻¹Y`, the minimum-norm interpolator of the pretraining data.
pub fn pretrain_minnorm(x: &DMatrix<f64>, y: &DVector<f64>, opts: SolveOptions) -> Result<WeightVector> {
    let (weights, jitter) = minnorm_with(&GramCache::new(x), x, y, opts.jitter)?;
    Ok(WeightVector {
        weights,
        provenance: Provenance {
            kind: EstimatorKind::Pretrained,
            jitter,
        },
    })
}

/// `θ̂₂`: the interpolator of the fine-tuning data closest to `θ̂₁`.
pub fn finetune_ridgeless(
    theta1: &WeightVector,
    xt: &DMatrix<f64>,
    yt: &DVector<f64>,
    opts: SolveOptions,
) -> Result<WeightVector> {
    let (weights, jitter) = correction_with(&GramCache::new(xt), &theta1.weights, xt, yt, 0.0, opts.jitter)?;
    Ok(WeightVector {
        weights,
        provenance: Provenance {
            kind: EstimatorKind::Ridgeless,
            jitter: jitter.max(theta1.provenance.jitter),
        },
    })
}

/// `θ̂_λ = θ̂₁ + X̃ᵀ(X̃X̃ᵀ + nλI)⁻¹(Ỹ − X̃θ̂₁)`.
pub fn finetune_ridge(
    theta1: &WeightVector,
    xt: &DMatrix<f64>,
    yt: &DVector<f64>,
    lambda: f64,
    opts: SolveOptions,
) -> Result<WeightVector> {
    let (weights, jitter) = correction_with(&GramCache::new(xt), &theta1.weights, xt, yt, lambda, opts.jitter)?;
    Ok(WeightVector {
        weights,
        provenance: Provenance {
            kind: EstimatorKind::Ridge { lambda },
            jitter: jitter.max(theta1.provenance.jitter),
        },
    })
}

/// `(1 − τ)θ̂₁ + τθ̂`.
pub fn ensemble(theta1: &WeightVector, theta_ft: &WeightVector, tau: f64, opts: SolveOptions) -> Result<WeightVector> {
    if theta1.dim() != theta_ft.dim() {
        return Err(Error::Dimension(format!(
            "ensemble endpoints differ in length: {} vs {}",
            theta1.dim(),
            theta_ft.dim()
        )));
    }
    if !tau.is_finite() || (!opts.allow_extrapolation && !(0.0..=1.0).contains(&tau)) {
        return Err(Error::validation("tau", format!("must lie in [0, 1], got {tau}")));
    }
    let weights = if tau == 0.0 {
        theta1.weights.clone()
    } else if tau == 1.0 {
        theta_ft.weights.clone()
    } else {
        &theta1.weights * (1.0 - tau) + &theta_ft.weights * tau
    };
    Ok(WeightVector {
        weights,
        provenance: Provenance {
            kind: EstimatorKind::Ensemble {
                lambda: theta_ft.kind().lambda(),
                tau,
            },
            jitter: theta1.provenance.jitter.max(theta_ft.provenance.jitter),
        },
    })
}

/// Fits many estimator kinds on one instance, sharing `θ̂₁` and one Gram
/// factorization per distinct λ.
#[derive(Debug)]
pub struct InstanceSolver<'a> {
    instance: &'a SampledInstance,
    opts: SolveOptions,
    pre: GramCache,
    ft: GramCache,
    theta1: Mutex<Option<WeightVector>>,
}

impl<'a> InstanceSolver<'a> {
    pub fn new(instance: &'a SampledInstance, opts: SolveOptions) -> Self {
        InstanceSolver {
            instance,
            opts,
            pre: GramCache::new(&instance.x),
            ft: GramCache::new(&instance.x_tilde),
            theta1: Mutex::new(None),
        }
    }

    pub fn pretrained(&self) -> Result<WeightVector> {
        if let Some(w) = self.theta1.lock().unwrap().as_ref() {
            return Ok(w.clone());
        }
        let (weights, jitter) = minnorm_with(&self.pre, &self.instance.x, &self.instance.y, self.opts.jitter)?;
        let w = WeightVector {
            weights,
            provenance: Provenance {
                kind: EstimatorKind::Pretrained,
                jitter,
            },
        };
        *self.theta1.lock().unwrap() = Some(w.clone());
        Ok(w)
    }

    fn finetuned(&self, theta1: &WeightVector, lambda: f64) -> Result<WeightVector> {
        let (weights, jitter) = correction_with(
            &self.ft,
            &theta1.weights,
            &self.instance.x_tilde,
            &self.instance.y_tilde,
            lambda,
            self.opts.jitter,
        )?;
        let kind = if lambda == 0.0 {
            EstimatorKind::Ridgeless
        } else {
            EstimatorKind::Ridge { lambda }
        };
        Ok(WeightVector {
            weights,
            provenance: Provenance {
                kind,
                jitter: jitter.max(theta1.provenance.jitter),
            },
        })
    }

    pub fn fit(&self, kind: EstimatorKind) -> Result<WeightVector> {
        kind.validate(self.opts.allow_extrapolation)?;
        let theta1 = self.pretrained()?;
        match kind {
            EstimatorKind::Pretrained => Ok(theta1),
            EstimatorKind::Ridgeless => self.finetuned(&theta1, 0.0),
            EstimatorKind::Ridge { lambda } => {
                let mut w = self.finetuned(&theta1, lambda)?;
                w.provenance.kind = kind;
                Ok(w)
            }
            EstimatorKind::Ensemble { lambda, tau } => {
                let ft = self.finetuned(&theta1, lambda)?;
                let mut w = ensemble(&theta1, &ft, tau, self.opts)?;
                w.provenance.kind = kind;
                Ok(w)
            }
        }
    }

    pub fn fine_tune_factorizations(&self) -> usize {
        self.ft.cached()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, Purpose::DesignPre, 0);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn gvec(len: usize, seed: u64) -> DVector<f64> {
        let mut rng = stream(seed, Purpose::NoisePre, 0);
        DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
    }

    fn pinv(x: &DMatrix<f64>) -> DMatrix<f64> {
        x.clone().svd(true, true).pseudo_inverse(1e-12).unwrap()
    }

    /// argmin ‖θ − θ₀‖ subject to Xθ = y, from the dense KKT system.
    fn kkt(theta0: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let (m, p) = x.shape();
        let mut k = DMatrix::zeros(p + m, p + m);
        k.view_mut((0, 0), (p, p)).fill_with_identity();
        k.view_mut((0, p), (p, m)).copy_from(&x.transpose());
        k.view_mut((p, 0), (m, p)).copy_from(x);
        let mut rhs = DVector::zeros(p + m);
        rhs.rows_mut(0, p).copy_from(theta0);
        rhs.rows_mut(p, m).copy_from(y);
        k.lu().solve(&rhs).unwrap().rows(0, p).into_owned()
    }

    fn wv(v: Vec<f64>) -> WeightVector {
        WeightVector {
            weights: DVector::from_vec(v),
            provenance: Provenance {
                kind: EstimatorKind::Pretrained,
                jitter: 0.0,
            },
        }
    }

    #[test]
    fn minnorm_hand_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let w = pretrain_minnorm(&x, &DVector::from_vec(vec![2.0]), SolveOptions::default()).unwrap();
        assert_eq!(w.weights.as_slice(), &[2.0, 0.0]);

        let y = DVector::from_vec(vec![0.3, -1.0, 4.0]);
        let w = pretrain_minnorm(&DMatrix::identity(3, 3), &y, SolveOptions::default()).unwrap();
        assert!((w.weights - y).amax() < 1e-15);
    }

    #[test]
    fn minnorm_matches_pseudo_inverse() {
        let x = gaussian(3, 6, 1);
        let y = gvec(3, 1);
        let w = pretrain_minnorm(&x, &y, SolveOptions::default()).unwrap();
        assert!((&x * &w.weights - &y).amax() <= 1e-10 * y.amax());
        assert!((&w.weights - pinv(&x) * &y).amax() < 1e-10);
    }

    #[test]
    fn ridgeless_hand_examples() {
        let theta1 = wv(vec![2.0, 0.0]);
        let xt = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let w = finetune_ridgeless(&theta1, &xt, &DVector::from_vec(vec![3.0]), SolveOptions::default()).unwrap();
        assert_eq!(w.weights.as_slice(), &[2.0, 3.0]);

        let xt = gaussian(3, 6, 2);
        let theta1 = wv(gvec(6, 2).as_slice().to_vec());
        let yt = &xt * &theta1.weights;
        let w = finetune_ridgeless(&theta1, &xt, &yt, SolveOptions::default()).unwrap();
        assert!((w.weights - &theta1.weights).amax() < 1e-12);
    }

    #[test]
    fn ridgeless_matches_kkt() {
        let xt = gaussian(3, 6, 3);
        let theta1 = wv(gvec(6, 3).as_slice().to_vec());
        let yt = gvec(3, 4);
        let w = finetune_ridgeless(&theta1, &xt, &yt, SolveOptions::default()).unwrap();
        assert!((&w.weights - kkt(&theta1.weights, &xt, &yt)).amax() < 1e-8);
        assert!((&xt * &w.weights - &yt).amax() < 1e-8 * yt.amax());
    }

    #[test]
    fn ridge_hand_and_limits() {
        let theta1 = wv(vec![2.0, 0.0]);
        let xt = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let yt = DVector::from_vec(vec![3.0]);
        let w = finetune_ridge(&theta1, &xt, &yt, 1.0, SolveOptions::default()).unwrap();
        assert!((w.weights - DVector::from_vec(vec![2.0, 1.5])).amax() < 1e-15);
        assert!(finetune_ridge(&theta1, &xt, &yt, -1.0, SolveOptions::default()).is_err());

        let xt = gaussian(4, 10, 5);
        let theta1 = wv(gvec(10, 5).as_slice().to_vec());
        let yt = gvec(4, 6);
        let ridgeless = finetune_ridgeless(&theta1, &xt, &yt, SolveOptions::default()).unwrap();
        let zero = finetune_ridge(&theta1, &xt, &yt, 0.0, SolveOptions::default()).unwrap();
        assert!((&zero.weights - &ridgeless.weights).amax() < 1e-10);
        let big = finetune_ridge(&theta1, &xt, &yt, 1e12, SolveOptions::default()).unwrap();
        assert!((&big.weights - &theta1.weights).norm() <= 1e-6 * theta1.weights.norm());
    }

    #[test]
    fn ridge_matches_dense_objective() {
        // minimizer of ‖Ỹ − X̃θ‖² + nλ‖θ − θ̂₁‖²
        let xt = gaussian(3, 7, 7);
        let theta1 = wv(gvec(7, 7).as_slice().to_vec());
        let yt = gvec(3, 8);
        let lambda = 0.3;
        let shift = 3.0 * lambda;
        let lhs = xt.tr_mul(&xt) + DMatrix::identity(7, 7) * shift;
        let rhs = xt.tr_mul(&yt) + &theta1.weights * shift;
        let oracle = lhs.lu().solve(&rhs).unwrap();
        let w = finetune_ridge(&theta1, &xt, &yt, lambda, SolveOptions::default()).unwrap();
        assert!((w.weights - oracle).amax() < 1e-9);
    }

    #[test]
    fn ensemble_examples() {
        let a = wv(vec![2.0, 0.0]);
        let mut b = wv(vec![2.0, 3.0]);
        b.provenance.kind = EstimatorKind::Ridgeless;
        let opts = SolveOptions::default();
        assert_eq!(ensemble(&a, &b, 0.0, opts).unwrap().weights, a.weights);
        assert_eq!(ensemble(&a, &b, 1.0, opts).unwrap().weights, b.weights);
        assert_eq!(ensemble(&a, &b, 0.5, opts).unwrap().weights.as_slice(), &[2.0, 1.5]);
        assert!(ensemble(&a, &b, 1.5, opts).is_err());
        let extra = SolveOptions {
            allow_extrapolation: true,
            ..opts
        };
        assert_eq!(ensemble(&a, &b, 2.0, extra).unwrap().weights.as_slice(), &[2.0, 6.0]);
    }

    #[test]
    fn ensemble_outputs_are_collinear() {
        let a = wv(gvec(8, 9).as_slice().to_vec());
        let b = wv(gvec(8, 10).as_slice().to_vec());
        let dir = &b.weights - &a.weights;
        for tau in [0.1, 0.37, 0.8] {
            let e = ensemble(&a, &b, tau, SolveOptions::default()).unwrap();
            let off = &e.weights - &a.weights;
            let t = off.dot(&dir) / dir.norm_squared();
            assert!((t - tau).abs() < 1e-12);
            assert!((off - &dir * t).amax() < 1e-12);
        }
    }

    #[test]
    fn singular_pretrain_gram_is_rejected() {
        let mut x = gaussian(3, 6, 11);
        let r0 = x.row(0).into_owned();
        x.row_mut(2).copy_from(&r0);
        let y = gvec(3, 11);
        match pretrain_minnorm(&x, &y, SolveOptions::default()) {
            Err(Error::SingularGram { rows, .. }) => assert!(rows.contains(&0) && rows.contains(&2)),
            other => panic!("expected singular Gram, got {other:?}"),
        }
        let opts = SolveOptions {
            jitter: true,
            ..Default::default()
        };
        let w = pretrain_minnorm(&x, &y, opts).unwrap();
        assert!(w.provenance.jitter > 0.0);
    }

    #[test]
    fn solver_matches_free_functions_and_caches() {
        let env = crate::synth::TaskEnvironment {
            n: 4,
            n_ft: None,
            spectrum_pre: crate::spectra::SpectrumSpec::full(1, 0.3, 12).unwrap(),
            spectrum_ft: crate::spectra::SpectrumSpec::new(1, 0.2, 12, 8).unwrap(),
            zeta1: 0.01,
            zeta2: 0.1,
            sigma2: 0.1,
            sigma2_tilde: 0.1,
            theta_c_norm: 1.0,
            coord_dist: Default::default(),
            xi: None,
        };
        let inst = crate::synth::sample_instance(&env, 5).unwrap();
        let opts = SolveOptions::default();
        let solver = InstanceSolver::new(&inst, opts);
        let t1 = pretrain_minnorm(&inst.x, &inst.y, opts).unwrap();
        assert_eq!(solver.fit(EstimatorKind::Pretrained).unwrap().weights, t1.weights);
        let r = finetune_ridge(&t1, &inst.x_tilde, &inst.y_tilde, 0.01, opts).unwrap();
        for tau in [0.0, 0.25, 0.5, 1.0] {
            let e = solver.fit(EstimatorKind::Ensemble { lambda: 0.01, tau }).unwrap();
            let oracle = ensemble(&t1, &r, tau, opts).unwrap();
            assert!((e.weights - oracle.weights).amax() < 1e-12);
        }
        solver.fit(EstimatorKind::Ridgeless).unwrap();
        assert_eq!(solver.fine_tune_factorizations(), 2);
        assert!(solver.fit(EstimatorKind::Ensemble { lambda: 0.0, tau: 1.2 }).is_err());
    }

    #[test]
    fn weights_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let w = wv(vec![0.1, -2.5, 1e-300]);
        w.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let values: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(values, vec![0.1, -2.5, 1e-300]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ridge_step_shrinks_with_lambda(seed in 0u64..10_000) {
            let xt = gaussian(4, 9, seed);
            let theta1 = wv(gvec(9, seed).as_slice().to_vec());
            let yt = gvec(4, seed + 1);
            let mut prev = f64::INFINITY;
            for lambda in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
                let w = finetune_ridge(&theta1, &xt, &yt, lambda, SolveOptions::default()).unwrap();
                let step = (&w.weights - &theta1.weights).norm();
                prop_assert!(step <= prev * (1.0 + 1e-12));
                prev = step;
            }
        }

        #[test]
        fn all_estimators_match_dense_oracles(seed in 0u64..10_000, n in 1usize..=6, extra in 1usize..=6) {
            let p = n + extra;
            let x = gaussian(n, p, seed);
            let xt = gaussian(n, p, seed + 7);
            let y = gvec(n, seed);
            let yt = gvec(n, seed + 3);
            let opts = SolveOptions::default();
            let t1 = pretrain_minnorm(&x, &y, opts).unwrap();
            prop_assert!((&t1.weights - pinv(&x) * &y).amax() < 1e-8 * (1.0 + y.amax()));
            let t2 = finetune_ridgeless(&t1, &xt, &yt, opts).unwrap();
            let oracle2 = kkt(&t1.weights, &xt, &yt);
            prop_assert!((&t2.weights - &oracle2).amax() < 1e-8 * (1.0 + oracle2.amax()));
            let tl = finetune_ridge(&t1, &xt, &yt, 0.05, opts).unwrap();
            let shift = n as f64 * 0.05;
            let lhs = xt.tr_mul(&xt) + DMatrix::identity(p, p) * shift;
            let oracle_l = lhs.lu().solve(&(xt.tr_mul(&yt) + &t1.weights * shift)).unwrap();
            prop_assert!((&tl.weights - &oracle_l).amax() < 1e-8 * (1.0 + oracle_l.amax()));
            let te = ensemble(&t1, &tl, 0.3, opts).unwrap();
            let oracle_e = &t1.weights * 0.7 + &oracle_l * 0.3;
            prop_assert!((&te.weights - &oracle_e).amax() < 1e-8 * (1.0 + oracle_e.amax()));
        }
    }
}
