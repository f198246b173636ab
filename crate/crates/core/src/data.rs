//! Classification datasets and their split across nodes.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::objectives::{SharedObjective, SoftmaxRegression};
use crate::rng::{substream, Stream};

/// Labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// The subset at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            classes: self.classes,
        }
    }
}

/// Parameters of the synthetic Gaussian-blob dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    /// Input dimension before the constant bias feature is appended.
    pub dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of class centers around the origin.
    pub separation: f64,
    /// Within-class standard deviation.
    pub spread: f64,
}

/// Isotropic Gaussian blobs, one per class, with a trailing bias feature of 1.
///
/// Class centers come from `(seed, Data, [0, class])`; samples from
/// `(seed, Data, [1, class])`, so growing `samples_per_class` extends the
/// same sample sequence.
pub fn gaussian_blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset> {
    if spec.classes < 2 || spec.dim == 0 {
        return Err(Error::InvalidParameter(
            "blobs need >= 2 classes and dim >= 1",
        ));
    }
    let p = spec.dim + 1;
    let mut features = Vec::with_capacity(spec.classes * spec.samples_per_class * p);
    let mut labels = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for c in 0..spec.classes {
        let mut crng = substream(seed, Stream::Data, &[0, c as u64]);
        let center: Vec<f64> = (0..spec.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut crng);
                spec.separation * z
            })
            .collect();
        let mut srng = substream(seed, Stream::Data, &[1, c as u64]);
        for _ in 0..spec.samples_per_class {
            for m in &center {
                let z: f64 = StandardNormal.sample(&mut srng);
                features.push(m + spec.spread * z);
            }
            features.push(1.0);
            labels.push(c);
        }
    }
    Ok(Dataset {
        features,
        labels,
        n_features: p,
        classes: spec.classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionMode {
    /// Uniform shuffle, equal contiguous chunks.
    #[default]
    Iid,
    /// Label-sorted data cut into `2M` shards; node `j` takes shards `j` and `j + M`.
    Moderate,
    /// Label-sorted contiguous blocks.
    Extreme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    /// Sample indices held by each node.
    pub nodes: Vec<Vec<usize>>,
    pub mode: PartitionMode,
    pub per_node: usize,
    /// Samples dropped so every node holds the same count.
    pub truncated: usize,
}

/// Split `data` across `m` nodes.
pub fn partition_data(
    data: &Dataset,
    m: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<PartitionedDataset> {
    if m == 0 {
        return Err(Error::TooFewNodes(0));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        PartitionMode::Iid => {
            let mut rng = substream(seed, Stream::Partition, &[m as u64]);
            order.shuffle(&mut rng);
        }
        PartitionMode::Moderate | PartitionMode::Extreme => {
            order.sort_by_key(|&i| (data.labels[i], i));
        }
    }
    let unit = if mode == PartitionMode::Moderate {
        2 * m
    } else {
        m
    };
    let kept = n - n % unit;
    let per_node = kept / m;
    let nodes = match mode {
        PartitionMode::Moderate => {
            let shard = kept / (2 * m);
            (0..m)
                .map(|j| {
                    let mut v = order[j * shard..(j + 1) * shard].to_vec();
                    v.extend_from_slice(&order[(j + m) * shard..(j + m + 1) * shard]);
                    v
                })
                .collect()
        }
        _ => (0..m)
            .map(|j| order[j * per_node..(j + 1) * per_node].to_vec())
            .collect(),
    };
    Ok(PartitionedDataset {
        nodes,
        mode,
        per_node,
        truncated: n - kept,
    })
}

/// Replace label `c` by `classes - 1 - c`.
pub fn flip_labels(data: &mut Dataset) {
    let c = data.classes;
    data.labels.iter_mut().for_each(|l| *l = c - 1 - *l);
}

/// One L2-regularized softmax objective per node. Nodes in `flipped` train on
/// flipped labels.
pub fn local_logistic(
    data: &Dataset,
    part: &PartitionedDataset,
    l2: f64,
    flipped: &[usize],
) -> Result<Vec<SharedObjective>> {
    part.nodes
        .iter()
        .enumerate()
        .map(|(j, idx)| {
            let mut local = data.subset(idx);
            if flipped.contains(&j) {
                flip_labels(&mut local);
            }
            let obj = SoftmaxRegression::new(
                local.features,
                local.labels,
                data.n_features,
                data.classes,
                l2,
            )?;
            Ok(Arc::new(obj) as SharedObjective)
        })
        .collect()
}
