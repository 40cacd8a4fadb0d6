//! k-means clustering, T1/heating subclass identification, class lifting and
//! the T1-replacement diagnosis.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::{unvectorize, FeatureMatrix};
use crate::sim::Dataset;

/// Fraction of trailing bins averaged when comparing a cluster to the steady states.
pub const DEFAULT_LATE_WINDOW: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    /// k-means++ seeding drawn from the seed.
    SeededRandom,
    /// Averaged means of several seeded-random runs.
    Stabilized { realizations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub cluster_means: Vec<Vec<f64>>,
    pub objective: f64,
    /// Objective after each assignment step.
    pub history: Vec<f64>,
    pub source_class: Option<u8>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == cluster).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], means: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, m) in means.iter().enumerate() {
        let d = sq_dist(x, m);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Σ_j Σ_{x∈S_j} ‖x − μ_j‖².
pub fn kmeans_objective(data: &FeatureMatrix, assignments: &[usize], means: &[Vec<f64>]) -> f64 {
    (0..data.n_rows()).map(|i| sq_dist(data.row(i), &means[assignments[i]])).sum()
}

/// Nearest-mean assignments and the resulting objective.
fn assign_all(data: &FeatureMatrix, means: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = (0..data.n_rows()).into_par_iter().map(|i| nearest(data.row(i), means)).collect();
    let objective = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), objective)
}

/// Cluster means for the given assignments; empty clusters take the point
/// farthest from its own mean (which is moved into the empty cluster).
fn update_means(data: &FeatureMatrix, assignments: &mut [usize], k: usize, previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = data.n_cols();
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            sums[a].iter_mut().zip(data.row(i)).for_each(|(s, v)| *s += v);
        }
        let means: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(previous)
            .map(|((s, &c), p)| if c > 0 { s.into_iter().map(|v| v / c as f64).collect() } else { p.clone() })
            .collect();
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return means;
        };
        let far = (0..data.n_rows())
            .filter(|&i| counts[assignments[i]] > 1)
            .map(|i| (i, sq_dist(data.row(i), &means[assignments[i]])))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("rows ≥ k guarantees a cluster with two members");
        assignments[far] = empty;
    }
}

/// Lloyd iterations from the given initial means.
pub fn kmeans_from(data: &FeatureMatrix, initial: Vec<Vec<f64>>, max_iter: usize) -> Result<Clustering> {
    let k = initial.len();
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if data.n_rows() < k {
        return Err(Error::invalid(format!("{} rows cannot form {k} clusters", data.n_rows())));
    }
    for m in &initial {
        check_dim(data.n_cols(), m.len())?;
    }
    let mut means = initial;
    let (mut assignments, first) = assign_all(data, &means);
    let mut history = vec![first];
    let mut converged = false;
    for _ in 0..max_iter {
        means = update_means(data, &mut assignments, k, &means);
        let (next, objective) = assign_all(data, &means);
        history.push(objective);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        means = update_means(data, &mut assignments, k, &means);
    }
    let objective = kmeans_objective(data, &assignments, &means);
    Ok(Clustering { k, assignments, cluster_means: means, objective, history, source_class: None })
}

/// k-means++ seeding.
fn plus_plus_init(data: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.n_rows();
    let mut means = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter().position(|&v| {
                acc += v;
                acc > target
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let m = data.row(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, v)| *v = v.min(sq_dist(data.row(i), &m)));
        means.push(m);
    }
    means
}

pub fn kmeans(data: &FeatureMatrix, k: usize, init: KMeansInit, max_iter: usize, seed: u64) -> Result<Clustering> {
    if k == 0 || data.n_rows() < k {
        return Err(Error::invalid(format!("{} rows cannot form {k} clusters", data.n_rows())));
    }
    let initial = match init {
        KMeansInit::SeededRandom => plus_plus_init(data, k, &mut ChaCha8Rng::seed_from_u64(seed)),
        KMeansInit::Stabilized { realizations } => stabilized_init(data, k, realizations, seed, max_iter)?,
    };
    kmeans_from(data, initial, max_iter)
}

/// Averages the means of `realizations` seeded-random runs after greedily
/// matching each run's clusters to those of the first run.
pub fn stabilized_init(
    data: &FeatureMatrix,
    k: usize,
    realizations: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Vec<Vec<f64>>> {
    if realizations == 0 {
        return Err(Error::invalid("realizations must be at least 1"));
    }
    let runs = (0..realizations)
        .map(|r| kmeans(data, k, KMeansInit::SeededRandom, max_iter, seed.wrapping_add(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let reference = &runs[0].cluster_means;
    let mut sums = reference.clone();
    for run in &runs[1..] {
        let slots = greedy_match(reference, &run.cluster_means);
        for (slot, m) in slots.iter().zip(&run.cluster_means) {
            sums[*slot].iter_mut().zip(m).for_each(|(s, v)| *s += v);
        }
    }
    let r = realizations as f64;
    Ok(sums.into_iter().map(|s| s.into_iter().map(|v| v / r).collect()).collect())
}

/// Slot in `reference` for each of `means`, pairing globally closest first.
fn greedy_match(reference: &[Vec<f64>], means: &[Vec<f64>]) -> Vec<usize> {
    let k = reference.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (a, m) in means.iter().enumerate() {
        for (b, r) in reference.iter().enumerate() {
            pairs.push((sq_dist(m, r), a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut slot = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for (_, a, b) in pairs {
        if slot[a] == usize::MAX && !taken[b] {
            slot[a] = b;
            taken[b] = true;
        }
    }
    slot
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassInfo {
    pub size: usize,
    pub mean_trajectory: Vec<Complex64>,
    /// Mean of the cluster-mean trajectory over the late window.
    pub late_endpoint: Complex64,
    pub t1_candidate: bool,
    pub heating_candidate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassReport {
    pub source_class: u8,
    pub clusters: Vec<SubclassInfo>,
}

impl SubclassReport {
    pub fn t1_clusters(&self) -> Vec<usize> {
        (0..self.clusters.len()).filter(|&j| self.clusters[j].t1_candidate).collect()
    }

    pub fn heating_clusters(&self) -> Vec<usize> {
        (0..self.clusters.len()).filter(|&j| self.clusters[j].heating_candidate).collect()
    }
}

fn late_mean(path: &[Complex64], window: f64) -> Complex64 {
    let n = path.len();
    let start = n - ((window * n as f64).ceil() as usize).clamp(1, n);
    path[start..].iter().sum::<Complex64>() / (n - start) as f64
}

/// Per-cluster sizes and mean trajectories computed from flattened `[Re ‖ Im]`
/// rows (which need not be the space the clustering ran in).
pub fn subclass_report(clustering: &Clustering, trajectories: &FeatureMatrix, source_class: u8) -> Result<SubclassReport> {
    check_dim(clustering.assignments.len(), trajectories.n_rows())?;
    let d = trajectories.n_cols();
    let mut sums = vec![vec![0.0; d]; clustering.k];
    let sizes = clustering.sizes();
    for (i, &a) in clustering.assignments.iter().enumerate() {
        sums[a].iter_mut().zip(trajectories.row(i)).for_each(|(s, v)| *s += v);
    }
    let clusters = sums
        .into_iter()
        .zip(sizes)
        .map(|(s, size)| {
            let mean: Vec<f64> = s.into_iter().map(|v| v / size.max(1) as f64).collect();
            let traj = unvectorize(&mean)?;
            Ok(SubclassInfo {
                size,
                late_endpoint: late_mean(&traj, DEFAULT_LATE_WINDOW),
                mean_trajectory: traj,
                t1_candidate: false,
                heating_candidate: false,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SubclassReport { source_class, clusters })
}

/// Flags clusters whose late-window mean is nearer the opposite class's steady state.
///
/// `ground_ref` and `excited_ref` are reference trajectories for the two
/// states in the same units as the report (e.g. simulator mean records or
/// empirical class means).
pub fn identify_special_clusters(
    report: &SubclassReport,
    ground_ref: &[Complex64],
    excited_ref: &[Complex64],
    window: f64,
) -> Result<SubclassReport> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::invalid(format!("late window must lie in (0, 1], got {window}")));
    }
    let g = late_mean(ground_ref, window);
    let e = late_mean(excited_ref, window);
    let mut out = report.clone();
    for c in &mut out.clusters {
        check_dim(ground_ref.len(), c.mean_trajectory.len())?;
        let late = late_mean(&c.mean_trajectory, window);
        c.late_endpoint = late;
        let closer_to_ground = (late - g).norm() < (late - e).norm();
        c.t1_candidate = report.source_class == 1 && closer_to_ground && c.size > 0;
        c.heating_candidate = report.source_class == 0 && !closer_to_ground && c.size > 0;
    }
    Ok(out)
}

/// Class-mean trajectories of a labelled flattened matrix, for use as references.
pub fn empirical_references(fm: &FeatureMatrix) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mean = |label: u8| -> Result<Vec<Complex64>> {
        let idx = fm.class_indices(label);
        if idx.is_empty() {
            return Err(Error::invalid(format!("no rows with label {label}")));
        }
        let mut m = vec![0.0; fm.n_cols()];
        for &i in &idx {
            m.iter_mut().zip(fm.row(i)).for_each(|(a, v)| *a += v);
        }
        unvectorize(&m.into_iter().map(|v| v / idx.len() as f64).collect::<Vec<_>>())
    };
    Ok((mean(0)?, mean(1)?))
}

/// Three-class labels: C0 = ground, C1 = excited, C2 = lifted T1 subclass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassLabels {
    pub labels: Vec<u8>,
    /// Binary outcome for each multi-class label.
    pub mapping: [u8; 3],
}

/// Relabels the members of `t1_cluster` (a clustering of the rows
/// `excited_rows` of a binary-labelled set) as class 2.
pub fn lift_to_multiclass(
    binary_labels: &[u8],
    excited_rows: &[usize],
    excited_clustering: &Clustering,
    t1_cluster: Option<usize>,
) -> Result<MultiClassLabels> {
    check_dim(excited_rows.len(), excited_clustering.assignments.len())?;
    let mut labels = binary_labels.to_vec();
    if let Some(id) = t1_cluster {
        if id >= excited_clustering.k {
            return Err(Error::invalid(format!("cluster {id} out of range for k = {}", excited_clustering.k)));
        }
        for (&row, &a) in excited_rows.iter().zip(&excited_clustering.assignments) {
            if binary_labels[row] != 1 {
                return Err(Error::invalid(format!("row {row} is not in the excited class")));
            }
            if a == id {
                labels[row] = 2;
            }
        }
    }
    Ok(MultiClassLabels { labels, mapping: [0, 1, 1] })
}

/// (target, donor) pairs: each flagged excited row gets a uniformly drawn
/// unflagged excited row.
fn draw_donors(labels: &[u8], flagged: &[usize], seed: u64) -> Result<Vec<(usize, usize)>> {
    if flagged.is_empty() {
        return Ok(Vec::new());
    }
    let mut is_flagged = vec![false; labels.len()];
    for &i in flagged {
        if i >= labels.len() || labels[i] != 1 {
            return Err(Error::invalid(format!("row {i} is not an excited-class shot")));
        }
        is_flagged[i] = true;
    }
    let pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1 && !is_flagged[i]).collect();
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets: Vec<usize> = flagged.to_vec();
    targets.sort_unstable();
    targets.dedup();
    Ok(targets.into_iter().map(|t| (t, pool[rng.random_range(0..pool.len())])).collect())
}

/// Replaces each flagged excited-class shot by a copy of a random unflagged excited shot.
pub fn replace_t1_events(dataset: &Dataset, t1_indices: &[usize], seed: u64) -> Result<Dataset> {
    let mut out = dataset.clone();
    for (target, donor) in draw_donors(&dataset.labels, t1_indices, seed)? {
        let src = &dataset.trajectories[donor];
        let dst = &mut out.trajectories[target];
        dst.samples = src.samples.clone();
        dst.initial_state = src.initial_state;
        dst.jump_record = src.jump_record.clone();
    }
    Ok(out)
}

/// Row-level form of [`replace_t1_events`] for flattened data.
pub fn replace_rows(fm: &FeatureMatrix, t1_indices: &[usize], seed: u64) -> Result<FeatureMatrix> {
    let swaps = draw_donors(fm.labels(), t1_indices, seed)?;
    let mut data = fm.as_slice().to_vec();
    let d = fm.n_cols();
    for (target, donor) in swaps {
        data[target * d..(target + 1) * d].copy_from_slice(fm.row(donor));
    }
    FeatureMatrix::new(data, d, fm.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, vec![1; rows.len()]).unwrap()
    }

    #[test]
    fn k_one_is_the_mean() {
        let x = fm(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]]);
        let c = kmeans(&x, 1, KMeansInit::SeededRandom, 50, 0).unwrap();
        assert_eq!(c.cluster_means[0], vec![1.0, 1.0]);
        assert!((c.objective - (2.0 + 2.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows() {
        let x = fm(&[vec![0.0]]);
        assert!(kmeans(&x, 2, KMeansInit::SeededRandom, 10, 0).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let x = fm(&[vec![0.0], vec![0.1], vec![10.0]]);
        // second mean far from all data: would be empty
        let c = kmeans_from(&x, vec![vec![5.0], vec![100.0]], 20).unwrap();
        assert!(c.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn single_realization_stabilized_init_is_that_run() {
        let x = fm(&[vec![0.0], vec![0.2], vec![5.0], vec![5.4]]);
        let init = stabilized_init(&x, 2, 1, 9, 50).unwrap();
        let run = kmeans(&x, 2, KMeansInit::SeededRandom, 50, 9).unwrap();
        assert_eq!(init, run.cluster_means);
    }

    #[test]
    fn lift_and_collapse_round_trip() {
        let labels = vec![0, 0, 1, 1, 1];
        let clustering = Clustering {
            k: 2,
            assignments: vec![0, 1, 0],
            cluster_means: vec![vec![0.0], vec![1.0]],
            objective: 0.0,
            history: vec![],
            source_class: Some(1),
        };
        let lifted = lift_to_multiclass(&labels, &[2, 3, 4], &clustering, Some(1)).unwrap();
        assert_eq!(lifted.labels, vec![0, 0, 1, 2, 1]);
        let back: Vec<u8> = lifted.labels.iter().map(|&l| lifted.mapping[l as usize]).collect();
        assert_eq!(back, labels);
        assert_eq!(lift_to_multiclass(&labels, &[2, 3, 4], &clustering, None).unwrap().labels, labels);
        assert!(lift_to_multiclass(&labels, &[2, 3, 4], &clustering, Some(5)).is_err());
    }

    #[test]
    fn replacement_pool_rules() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 1, 1]).unwrap();
        assert_eq!(replace_rows(&x, &[], 0).unwrap(), x);
        let forced = replace_rows(&x, &[1, 3], 5).unwrap();
        assert_eq!(forced.as_slice(), &[0.0, 2.0, 2.0, 2.0]);
        assert!(matches!(replace_rows(&x, &[1, 2, 3], 0), Err(Error::EmptyPool)));
        assert!(replace_rows(&x, &[0], 0).is_err());
    }

    #[test]
    fn injected_decay_cluster_is_flagged() {
        let n = 10;
        let g: Vec<Complex64> = (0..n).map(|_| Complex64::new(-1.0, 0.0)).collect();
        let e: Vec<Complex64> = (0..n).map(|_| Complex64::new(1.0, 0.0)).collect();
        let decayed: Vec<Complex64> = (0..n).map(|j| if j < 3 { e[j] } else { g[j] }).collect();
        let report = SubclassReport {
            source_class: 1,
            clusters: [e.clone(), decayed]
                .into_iter()
                .map(|t| SubclassInfo {
                    size: 5,
                    late_endpoint: Complex64::new(0.0, 0.0),
                    mean_trajectory: t,
                    t1_candidate: false,
                    heating_candidate: false,
                })
                .collect(),
        };
        let out = identify_special_clusters(&report, &g, &e, DEFAULT_LATE_WINDOW).unwrap();
        assert_eq!(out.t1_clusters(), vec![1]);
        assert!(out.heating_clusters().is_empty());
    }
}
