//! Datasets: IDX loading, synthetic generators, splits and label noise.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive, SeededRng};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Features `[N, D]` with integer labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::structural(format!(
                "features must be [N, D], got {:?}",
                features.shape()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::structural(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if classes == 0 {
            return Err(Error::structural("dataset needs at least one class"));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= classes) {
            return Err(Error::Invariant(format!(
                "label {bad} outside 0..{classes}"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Invariant("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::structural("empty subset"));
        }
        Ok(Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        })
    }

    /// Per-feature means.
    pub fn feature_means(&self) -> Vec<f64> {
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for i in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.features.row(i)) {
                *m += v;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Subtracts `means` from every row.
    pub fn center(&mut self, means: &[f64]) {
        for i in 0..self.len() {
            for (v, m) in self.features.row_mut(i).iter_mut().zip(means) {
                *v -= m;
            }
        }
    }

    /// Centres every feature on its own mean and returns the means removed.
    pub fn mean_normalize(&mut self) -> Vec<f64> {
        let means = self.feature_means();
        self.center(&means);
        means
    }

    /// One-hot encoding of the labels, `[N, K]`.
    pub fn one_hot(&self) -> Tensor {
        one_hot(&self.labels, self.classes)
    }

    /// Seeded shuffle split into `(train, test)` with `n_test` test rows.
    pub fn train_test_split(&self, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if n_test == 0 || n_test >= self.len() {
            return Err(Error::structural(format!(
                "test size {n_test} must lie in 1..{}",
                self.len()
            )));
        }
        let perm = SeededRng::new(seed).permutation(self.len());
        let (test, train) = perm.split_at(n_test);
        Ok((self.subset(train)?, self.subset(test)?))
    }

    /// Writes `label,feat_0,…,feat_{D−1}` rows after a schema line.
    pub fn write_csv(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "# hermite-csv v1 dataset")?;
        let header: Vec<String> = (0..self.dim()).map(|j| format!("feat_{j}")).collect();
        writeln!(out, "label,{}", header.join(","))?;
        for i in 0..self.len() {
            write!(out, "{}", self.labels[i])?;
            for v in self.features.row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len().max(1), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = 1.0;
    }
    t
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parsed IDX file: dimension sizes and the unsigned-byte payload.
struct Idx {
    dims: Vec<usize>,
    payload: Vec<u8>,
}

fn parse_idx(path: &Path, expected_magic: u32) -> Result<Idx> {
    let bytes = read_maybe_gz(path)?;
    let fmt = |offset: usize, detail: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        detail,
    };
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| fmt(at, "truncated header".into()))
    };
    let magic = word(0)?;
    if magic != expected_magic {
        return Err(fmt(
            0,
            format!("bad magic {magic:#010x}, expected {expected_magic:#010x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|k| word(4 + 4 * k).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let need: usize = dims.iter().product();
    if bytes.len() < start + need {
        return Err(fmt(
            bytes.len(),
            format!("truncated payload: need {need} bytes after offset {start}"),
        ));
    }
    Ok(Idx {
        dims,
        payload: bytes[start..start + need].to_vec(),
    })
}

/// Reads an IDX image/label pair (raw or gzip). Pixels are scaled to
/// `[0, 1]`; the class count is 10.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = parse_idx(images_path, IDX_IMAGES)?;
    let lab = parse_idx(labels_path, IDX_LABELS)?;
    if img.dims.len() != 3 {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            offset: 3,
            detail: format!("expected 3 image dimensions, got {}", img.dims.len()),
        });
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::structural(format!(
            "{n} images but {} labels",
            lab.dims[0]
        )));
    }
    let labels: Vec<usize> = lab.payload.iter().map(|&b| b as usize).collect();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: (8 + pos) as u64,
            detail: format!("label {} exceeds 9", labels[pos]),
        });
    }
    let d = img.dims[1] * img.dims[2];
    let data = img.payload.iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new(Tensor::matrix(n, d, data)?, labels, 10)
}

/// Loads `train-*` and `t10k-*` IDX pairs (optionally `.gz`) from `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let pick = |stem: &str| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    let train = load_idx(
        &pick("train-images-idx3-ubyte"),
        &pick("train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        &pick("t10k-images-idx3-ubyte"),
        &pick("t10k-labels-idx1-ubyte"),
    )?;
    Ok((train, test))
}

/// Gaussian clusters around centres drawn from `U[−3, 3]^D`, rows shuffled,
/// features mean-normalized.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::structural("blobs need positive counts"));
    }
    let mut rng = SeededRng::new(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.uniform_range(-3.0, 3.0)).collect())
        .collect();
    let n = classes * per_class;
    let order = rng.permutation(n);
    let mut data = vec![0.0; n * dim];
    let mut labels = vec![0; n];
    for (slot, &src) in order.iter().enumerate() {
        let k = src / per_class;
        labels[slot] = k;
        for j in 0..dim {
            data[slot * dim + j] = centres[k][j] + spread * rng.normal();
        }
    }
    let mut ds = Dataset::new(Tensor::matrix(n, dim, data)?, labels, classes)?;
    ds.mean_normalize();
    Ok(ds)
}

/// Two interleaving half circles as in the common `make_moons` generator,
/// with isotropic Gaussian noise, rows shuffled and mean-normalized.
pub fn synth_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::structural("two_moons needs at least two points"));
    }
    let mut rng = SeededRng::new(seed);
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut points = Vec::with_capacity(n);
    let step = |count: usize, i: usize| {
        if count > 1 {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    for i in 0..n_outer {
        let t = step(n_outer, i);
        points.push(([t.cos(), t.sin()], 0));
    }
    for i in 0..n_inner {
        let t = step(n_inner, i);
        points.push(([1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    rng.shuffle(&mut points);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (p, l) in points {
        data.push(p[0] + noise * rng.normal());
        data.push(p[1] + noise * rng.normal());
        labels.push(l);
    }
    let mut ds = Dataset::new(Tensor::matrix(n, 2, data)?, labels, 2)?;
    ds.mean_normalize();
    Ok(ds)
}

// Seven-segment strokes on an 8×8 grid: (row0, col0, row1, col1) inclusive.
const SEGMENTS: [(usize, usize, usize, usize); 7] = [
    (1, 2, 1, 5), // top
    (1, 5, 4, 5), // upper right
    (4, 5, 6, 5), // lower right
    (6, 2, 6, 5), // bottom
    (4, 2, 6, 2), // lower left
    (1, 2, 4, 2), // upper left
    (4, 2, 4, 5), // middle
];

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],
    &[1, 2],
    &[0, 1, 6, 4, 3],
    &[0, 1, 6, 2, 3],
    &[5, 6, 1, 2],
    &[0, 5, 6, 2, 3],
    &[0, 5, 4, 3, 2, 6],
    &[0, 1, 2],
    &[0, 1, 2, 3, 4, 5, 6],
    &[0, 1, 2, 3, 5, 6],
];

/// Stroke-rendered 8×8 digits in `[0, 1]`: random horizontal shift of up to
/// one pixel, stroke intensity in `[0.6, 1]`, additive noise of sd 0.05.
pub fn synth_digits(per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::structural("synth_digits needs a positive count"));
    }
    let mut rng = SeededRng::new(seed);
    let n = 10 * per_class;
    let mut data = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for idx in 0..n {
        let digit = idx % 10;
        let shift = rng.below(3) as isize - 1;
        let ink = rng.uniform_range(0.6, 1.0);
        let mut img = [0.0f64; 64];
        for &s in DIGIT_SEGMENTS[digit] {
            let (r0, c0, r1, c1) = SEGMENTS[s];
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let cc = (c as isize + shift).clamp(0, 7) as usize;
                    img[r * 8 + cc] = ink;
                }
            }
        }
        for v in img.iter_mut() {
            *v = (*v + 0.05 * rng.normal()).clamp(0.0, 1.0);
        }
        data.extend_from_slice(&img);
        labels.push(digit);
    }
    Dataset::new(Tensor::matrix(n, 64, data)?, labels, 10)
}

/// Disjoint labeled/unlabeled index sets over one dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SslSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Class-balanced labeled subset: `n_labeled / K` per class, the remainder
/// going to the lowest class indices; short classes are topped up from a
/// seeded shuffle of the leftovers. Both index lists are sorted.
pub fn make_ssl_split(data: &Dataset, n_labeled: usize, seed: u64) -> Result<SslSplit> {
    let k = data.classes;
    if n_labeled < k {
        return Err(Error::structural(format!(
            "{n_labeled} labeled examples cannot cover {k} classes"
        )));
    }
    if n_labeled > data.len() {
        return Err(Error::structural(format!(
            "{n_labeled} labeled examples requested from {} rows",
            data.len()
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut chosen = vec![false; data.len()];
    let mut taken = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        rng.shuffle(members);
        let quota = n_labeled / k + usize::from(c < n_labeled % k);
        for &i in members.iter().take(quota) {
            chosen[i] = true;
            taken += 1;
        }
    }
    if taken < n_labeled {
        let mut rest: Vec<usize> = (0..data.len()).filter(|i| !chosen[*i]).collect();
        rng.shuffle(&mut rest);
        for &i in rest.iter().take(n_labeled - taken) {
            chosen[i] = true;
        }
    }
    let (labeled, unlabeled) = (0..data.len()).partition(|i| chosen[*i]);
    Ok(SslSplit { labeled, unlabeled })
}

/// Selects exactly `floor(p·N)` indices uniformly and redraws each of their
/// labels uniformly from all `classes` (the redraw may equal the original).
/// Returns the noisy labels and the selection mask.
pub fn inject_label_noise(
    labels: &[usize],
    classes: usize,
    p: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("noise rate {p} outside [0, 1]")));
    }
    let count = (p * labels.len() as f64).floor() as usize;
    let mut rng = SeededRng::new(seed);
    let perm = rng.permutation(labels.len());
    let mut noisy = labels.to_vec();
    let mut mask = vec![false; labels.len()];
    let mut redraw = SeededRng::new(derive(seed, 1));
    for &i in &perm[..count] {
        mask[i] = true;
        noisy[i] = redraw.below(classes);
    }
    Ok((noisy, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_idx(path: &Path, magic: u32, dims: &[u32], payload: &[u8]) {
        let mut bytes = magic.to_be_bytes().to_vec();
        for d in dims {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend_from_slice(payload);
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_idx(&img, IDX_IMAGES, &[2, 2, 2], &[0, 255, 51, 0, 1, 2, 3, 4]);
        write_idx(&lab, IDX_LABELS, &[2], &[9, 3]);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.labels, vec![9, 3]);
        assert_eq!(ds.features.row(0), &[0.0, 1.0, 0.2, 0.0]);

        write_idx(&img, IDX_IMAGES, &[2, 2, 2], &[0, 1, 2]);
        match load_idx(&img, &lab) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("{other:?}"),
        }
        write_idx(&img, 0x0000_0802, &[2, 2, 2], &[0; 8]);
        assert!(matches!(
            load_idx(&img, &lab),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn vendored_mnist_subset_loads() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
        let (train, test) = load_mnist_dir(&dir).unwrap();
        assert_eq!((train.len(), train.dim(), train.classes), (5000, 784, 10));
        assert_eq!(test.len(), 1000);
        assert!(train
            .features
            .data()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn blobs_shape_and_centering() {
        let ds = synth_blobs(3, 100, 2, 0.3, 1).unwrap();
        assert_eq!((ds.len(), ds.classes), (300, 3));
        for m in ds.feature_means() {
            assert!(m.abs() < 1e-9);
        }
        assert_eq!(ds, synth_blobs(3, 100, 2, 0.3, 1).unwrap());
    }

    #[test]
    fn moons_are_balanced() {
        let ds = synth_two_moons(200, 0.0, 3).unwrap();
        assert_eq!(ds.labels.iter().filter(|l| **l == 1).count(), 100);
    }

    #[test]
    fn digits_are_in_unit_range() {
        let ds = synth_digits(5, 2).unwrap();
        assert_eq!((ds.len(), ds.dim()), (50, 64));
        assert!(ds.features.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ssl_split_is_balanced() {
        let ds = synth_blobs(10, 100, 2, 0.5, 4).unwrap();
        let s = make_ssl_split(&ds, 100, 9).unwrap();
        let mut counts = [0; 10];
        for &i in &s.labeled {
            counts[ds.labels[i]] += 1;
        }
        assert_eq!(counts, [10; 10]);
        assert_eq!(s.labeled.len() + s.unlabeled.len(), 1000);
        assert!(s
            .labeled
            .iter()
            .all(|i| s.unlabeled.binary_search(i).is_err()));
        assert_eq!(s, make_ssl_split(&ds, 100, 9).unwrap());
        assert!(matches!(
            make_ssl_split(&ds, 9, 0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn label_noise_counts() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        let (same, mask) = inject_label_noise(&labels, 10, 0.0, 1).unwrap();
        assert_eq!(same, labels);
        assert!(mask.iter().all(|m| !m));
        let (_, mask) = inject_label_noise(&labels, 10, 0.3, 1).unwrap();
        assert_eq!(mask.iter().filter(|m| **m).count(), 3000);
        let (noisy, _) = inject_label_noise(&labels, 10, 1.0, 1).unwrap();
        let agree = noisy.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64;
        // binomial(10000, 0.1): sd = 30
        assert!((agree - 1000.0).abs() < 90.0, "{agree}");
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n_per in 2usize..30, k in 2usize..6, frac in 0.0f64..1.0, seed: u64) {
            let ds = synth_blobs(k, n_per, 2, 0.5, seed).unwrap();
            let n_lab = k + ((ds.len() - k) as f64 * frac) as usize;
            let s = make_ssl_split(&ds, n_lab, seed).unwrap();
            prop_assert_eq!(s.labeled.len(), n_lab);
            let mut all: Vec<usize> = s.labeled.iter().chain(&s.unlabeled).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        }
    }
}
