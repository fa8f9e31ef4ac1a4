//! Non-neural meta-embeddings: concatenation, averaging, truncated SVD of the
//! concatenation, and the linear projection method (1TON).

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{require_normalized, MetaConfig, MetaMethod, MetaModel, MetaParams};
use crate::embedding_io::{AlignedEmbeddingSet, EmbeddingTable};
use crate::error::{Error, Result};
use crate::nn::{fit, LossKind, Trainable};

/// Concatenates the source vectors of every word, in source order.
pub fn conc(set: &AlignedEmbeddingSet) -> Result<EmbeddingTable> {
    require_normalized(set)?;
    EmbeddingTable::new("conc", set.shared_vocab().to_vec(), set.concatenated())
}

/// Averages the sources after right-padding them with zeros to the widest dimension.
pub fn avg(set: &AlignedEmbeddingSet) -> Result<EmbeddingTable> {
    require_normalized(set)?;
    EmbeddingTable::new("av", set.shared_vocab().to_vec(), average_padded(set))
}

pub(crate) fn average_padded(set: &AlignedEmbeddingSet) -> Array2<f64> {
    let padded = set.padded();
    let mut acc = Array2::zeros(padded[0].dim());
    for m in &padded {
        acc += m;
    }
    acc / padded.len() as f64
}

/// Rank-`k` factorization `U_k Σ_k V_kᵀ` of a matrix.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    /// `n x k` left singular vectors.
    pub u: Array2<f64>,
    /// `k` singular values, descending.
    pub singular_values: Array1<f64>,
    /// `k x d` right singular vectors as rows.
    pub vt: Array2<f64>,
}

impl TruncatedSvd {
    /// `U_k Σ_k`, the projected rows.
    pub fn scores(&self) -> Array2<f64> {
        &self.u * &self.singular_values
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.scores().dot(&self.vt)
    }
}

/// Truncated SVD. Components are ordered by decreasing singular value and the
/// largest-magnitude entry of each right singular vector is made positive.
pub fn truncated_svd(matrix: &Array2<f64>, k: usize) -> Result<TruncatedSvd> {
    let (n, d) = matrix.dim();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank {k} must lie in 1..={} for a {n} x {d} matrix",
            n.min(d)
        )));
    }
    let dm = DMatrix::from_fn(n, d, |i, j| matrix[(i, j)]);
    let svd = dm.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let mut out_u = Array2::zeros((n, k));
    let mut out_s = Array1::zeros(k);
    let mut out_vt = Array2::zeros((k, d));
    for (c, &j) in order.iter().take(k).enumerate() {
        let row = v_t.row(j);
        let pivot = (0..d).fold(0, |best, i| if row[i].abs() > row[best].abs() { i } else { best });
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        out_s[c] = sv[j];
        for i in 0..d {
            out_vt[(c, i)] = sign * row[i];
        }
        for i in 0..n {
            out_u[(i, c)] = sign * u[(i, j)];
        }
    }
    Ok(TruncatedSvd {
        u: out_u,
        singular_values: out_s,
        vt: out_vt,
    })
}

/// Rank-`k` SVD meta-embedding: rows of `U_k Σ_k` of the concatenated sources.
pub fn svd_meta(set: &AlignedEmbeddingSet, k: usize) -> Result<EmbeddingTable> {
    let model = svd_model(set, k)?;
    model.table(set)
}

pub(crate) fn svd_model(set: &AlignedEmbeddingSet, k: usize) -> Result<MetaModel> {
    require_normalized(set)?;
    let svd = truncated_svd(&set.concatenated(), k)?;
    Ok(MetaModel {
        method: MetaMethod::Svd,
        loss: None,
        target: None,
        meta_dim: k,
        source_dims: set.dims(),
        params: MetaParams::Svd {
            rows: svd.scores(),
            singular_values: svd.singular_values,
            components: svd.vt,
        },
        loss_trace: Vec::new(),
    })
}

/// Jointly learned meta vectors and per-source linear projections.
struct OneTon<'a> {
    targets: Vec<&'a Array2<f64>>,
    meta: Array2<f64>,
    projections: Vec<Array2<f64>>,
}

impl Trainable for OneTon<'_> {
    fn n_samples(&self) -> usize {
        self.meta.nrows()
    }

    fn step(&mut self, batch: &[usize], learning_rate: f64) -> Result<f64> {
        let m = self.meta.select(Axis(0), batch);
        let mut grad_m = Array2::<f64>::zeros(m.dim());
        let mut loss = 0.0;
        let mut grad_p = Vec::with_capacity(self.projections.len());
        for (p, target) in self.projections.iter().zip(&self.targets) {
            let y = target.select(Axis(0), batch);
            let out = m.dot(&p.t());
            let (l, g) = LossKind::Mse.batch(out.view(), y.view())?;
            loss += l;
            grad_m += &g.dot(p);
            grad_p.push(g.t().dot(&m));
        }
        for (p, g) in self.projections.iter_mut().zip(&grad_p) {
            p.scaled_add(-learning_rate, g);
        }
        for (r, &w) in batch.iter().enumerate() {
            self.meta
                .row_mut(w)
                .scaled_add(-learning_rate, &grad_m.row(r));
        }
        Ok(loss)
    }

    fn params_finite(&self) -> bool {
        self.meta.iter().all(|v| v.is_finite())
            && self.projections.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// 1TON: learns a `rank`-dimensional vector `m_w` per word and a projection
/// `P_s` per source, minimizing `Σ_s mse(P_s m_w, s(w))` by minibatch SGD.
pub fn one_ton(set: &AlignedEmbeddingSet, config: &MetaConfig) -> Result<MetaModel> {
    require_normalized(set)?;
    let k = config.rank;
    if k == 0 {
        return Err(Error::InvalidArgument("1TON rank must be positive".into()));
    }
    let (meta, projections) = one_ton_init(set, config)?;
    let targets: Vec<&Array2<f64>> = set.sources().iter().map(|t| t.matrix()).collect();
    let mut job = OneTon {
        targets,
        meta,
        projections,
    };
    let trace = fit(&mut job, &config.train)?;
    Ok(MetaModel {
        method: MetaMethod::OneTon,
        loss: Some(LossKind::Mse),
        target: None,
        meta_dim: k,
        source_dims: set.dims(),
        params: MetaParams::OneTon {
            meta: job.meta,
            projections: job.projections,
        },
        loss_trace: trace,
    })
}

/// Meta vectors start at `Normal(0, init_std²)` (unit variance when fan-in
/// scaling is requested); projections at `Normal(0, 1/rank)`.
pub(crate) fn one_ton_init(
    set: &AlignedEmbeddingSet,
    config: &MetaConfig,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let k = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std = if config.train.init_scaled { 1.0 } else { config.train.init_std };
    let meta_dist = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let proj_dist = Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("positive std");
    let meta = Array2::from_shape_simple_fn((set.len(), k), || meta_dist.sample(&mut rng));
    let projections = set
        .dims()
        .into_iter()
        .map(|d| Array2::from_shape_simple_fn((d, k), || proj_dist.sample(&mut rng)))
        .collect();
    Ok((meta, projections))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_io::l2_normalize;
    use crate::nn::TrainConfig;
    use ndarray::array;
    use rand::Rng;

    fn set_of(tables: Vec<(&str, Array2<f64>)>, words: &[&str]) -> AlignedEmbeddingSet {
        let vocab: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        let tables = tables
            .into_iter()
            .map(|(n, m)| EmbeddingTable::new(n, vocab.clone(), m).unwrap())
            .collect();
        l2_normalize(AlignedEmbeddingSet::new(tables).unwrap()).unwrap()
    }

    fn random_set(seed: u64, n: usize, dims: &[usize]) -> AlignedEmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let tables = dims
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let name: &str = ["a", "b", "c", "d"][i];
                (name, Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0)))
            })
            .collect();
        set_of(tables, &refs)
    }

    #[test]
    fn conc_definitional() {
        let set = set_of(vec![("a", array![[1., 0.], [0., 1.]]), ("b", array![[0., 1.], [1., 0.]])], &["w", "v"]);
        let t = conc(&set).unwrap();
        assert_eq!(t.dim(), 4);
        assert_eq!(t.lookup("w").unwrap(), array![1., 0., 0., 1.]);
    }

    #[test]
    fn conc_dims_add_and_single_source_identity() {
        let set = random_set(1, 6, &[2, 3]);
        assert_eq!(conc(&set).unwrap().dim(), 5);
        let single = AlignedEmbeddingSet::new(vec![set.source(0).clone()])
            .unwrap()
            .assume_normalized()
            .unwrap();
        assert_eq!(conc(&single).unwrap().matrix(), set.source(0).matrix());
    }

    #[test]
    fn conc_requires_normalized() {
        let t = EmbeddingTable::new("a", vec!["x".into()], array![[2.0, 0.0]]).unwrap();
        let raw = AlignedEmbeddingSet::new(vec![t.clone(), t]).unwrap();
        assert!(conc(&raw).is_err());
    }

    #[test]
    fn avg_definitional() {
        let set = set_of(vec![("a", array![[1., 0.]]), ("b", array![[0., 1.]])], &["w"]);
        assert_eq!(avg(&set).unwrap().lookup("w").unwrap(), array![0.5, 0.5]);
        let same = set_of(vec![("a", array![[0.6, 0.8]]), ("b", array![[0.6, 0.8]])], &["w"]);
        let row = avg(&same).unwrap().lookup("w").unwrap().to_owned();
        assert!((&row - &array![0.6, 0.8]).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn avg_pads_to_widest() {
        // [0.6, 0.8] and [0, 0, 0, 1] padded: ([0.6, 0.8, 0, 0] + [0, 0, 0, 1]) / 2
        let set = set_of(vec![("a", array![[3., 4.]]), ("b", array![[0., 0., 0., 2.]])], &["w"]);
        let row = avg(&set).unwrap().lookup("w").unwrap().to_owned();
        let expected = array![0.3, 0.4, 0.0, 0.5];
        assert!((&row - &expected).iter().all(|v| v.abs() < 1e-15), "{row}");
    }

    #[test]
    fn svd_rank_one_exact() {
        let u = array![1.0, -2.0, 0.5, 3.0];
        let v = array![0.2, 0.4, -1.0];
        let m = u.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        let svd = truncated_svd(&m, 1).unwrap();
        let err = (&svd.reconstruct() - &m).mapv(|x| x * x).sum().sqrt();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn svd_full_rank_exact_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Array2::from_shape_simple_fn((12, 5), || rng.random_range(-1.0..1.0));
        let svd = truncated_svd(&m, 5).unwrap();
        let err = (&svd.reconstruct() - &m).mapv(|x| x * x).sum().sqrt();
        assert!(err < 1e-8, "{err}");
        let s = &svd.singular_values;
        assert!(s.windows(2).into_iter().all(|w| w[0] >= w[1]));
        for row in svd.vt.rows() {
            let pivot = row.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn svd_rank_too_large() {
        let m = Array2::<f64>::zeros((4, 3));
        assert!(truncated_svd(&m, 4).is_err());
        assert!(truncated_svd(&m, 0).is_err());
        let set = random_set(3, 5, &[2, 2]);
        assert!(svd_meta(&set, 5).is_err());
        assert_eq!(svd_meta(&set, 3).unwrap().dim(), 3);
    }

    fn one_ton_config(lr: f64, epochs: usize) -> MetaConfig {
        MetaConfig {
            rank: 200,
            seed: 4,
            train: TrainConfig {
                batch_size: 4,
                epochs,
                learning_rate: Some(lr),
                ..TrainConfig::default()
            },
            ..MetaConfig::default()
        }
    }

    #[test]
    fn one_ton_single_source_fits() {
        let set = random_set(5, 12, &[10]);
        let model = one_ton(&set, &one_ton_config(0.1, 300)).unwrap();
        let trace = &model.loss_trace;
        assert!(trace.last().unwrap() < &1e-3, "{:?}", trace.last());
        assert!(trace.last().unwrap() < &trace[0]);
    }

    #[test]
    fn one_ton_zero_lr_keeps_init() {
        let set = random_set(6, 9, &[4, 3]);
        let cfg = one_ton_config(0.0, 3);
        let (init, _) = one_ton_init(&set, &cfg).unwrap();
        let model = one_ton(&set, &cfg).unwrap();
        match &model.params {
            MetaParams::OneTon { meta, .. } => assert_eq!(meta, &init),
            _ => unreachable!(),
        }
    }

    #[test]
    fn one_ton_identical_sources_agree() {
        let base = random_set(7, 10, &[6]);
        let set = AlignedEmbeddingSet::new(vec![base.source(0).clone(), base.source(0).clone()])
            .unwrap()
            .assume_normalized()
            .unwrap();
        let model = one_ton(&set, &one_ton_config(0.1, 300)).unwrap();
        let MetaParams::OneTon { meta, projections } = &model.params else {
            unreachable!()
        };
        let a = meta.dot(&projections[0].t());
        let b = meta.dot(&projections[1].t());
        let rms = ((&a - &b).mapv(|x| x * x).sum() / a.len() as f64).sqrt();
        assert!(rms < 1e-2, "{rms}");
    }
}
