//! Connected-component labeling of candidate vertices on a triangle mesh, and the
//! size / median acceptance test that turns components into blobs.
//!
//! Labeling is a two-pass union-find scan over triangles. Only candidate vertices
//! take part: within a triangle, its candidate vertices are merged; non-candidates
//! keep the null label 0.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::params::BlobParams;

/// Union-find forest in one flat array. Entry `i` holds the parent of label `i`;
/// label 0 is the null label. A label's parent is never larger than the label.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
}

impl Default for UnionFind {
    fn default() -> Self {
        Self { parent: vec![0] }
    }
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_label(&mut self) -> u32 {
        let l = self.parent.len() as u32;
        self.parent.push(l);
        l
    }

    /// Root of `label`. No path compression.
    #[inline]
    pub fn find(&self, mut label: u32) -> u32 {
        while self.parent[label as usize] != label {
            label = self.parent[label as usize];
        }
        label
    }

    /// Points every root in `roots` at `min`. `min` must be the smallest of them.
    #[inline]
    fn attach(&mut self, root: u32, min: u32) {
        debug_assert!(min <= root);
        self.parent[root as usize] = min;
    }

    /// Makes every entry point directly at its root. Relies on `parent[i] <= i`,
    /// so one ascending sweep suffices.
    pub fn flatten(&mut self) {
        for i in 1..self.parent.len() {
            let p = self.parent[i] as usize;
            self.parent[i] = self.parent[p];
        }
    }

    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    /// Number of labels issued, excluding the null label.
    pub fn issued(&self) -> usize {
        self.parent.len() - 1
    }
}

/// Candidate vertex partition produced by [`label_components`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    /// Component id + 1 per vertex; 0 for non-candidates.
    pub labels: Vec<u32>,
    /// Members of each component, ascending. Components are ordered by their
    /// smallest member.
    pub components: Vec<Vec<u32>>,
}

fn scan(mesh: &TriMesh, mask: &[bool]) -> (Vec<u32>, UnionFind) {
    let mut labels = vec![0u32; mesh.vertex_count()];
    let mut uf = UnionFind::new();

    for tri in mesh.triangles() {
        let mut members = [0u32; 3];
        let mut n = 0;
        for &v in tri {
            if mask[v as usize] {
                members[n] = v;
                n += 1;
            }
        }
        let members = &members[..n];
        if members.is_empty() {
            continue;
        }

        let mut min_root = u32::MAX;
        for &v in members {
            let l = labels[v as usize];
            if l != 0 {
                min_root = min_root.min(uf.find(l));
            }
        }
        if min_root == u32::MAX {
            let l = uf.new_label();
            for &v in members {
                labels[v as usize] = l;
            }
            continue;
        }
        for &v in members {
            let l = labels[v as usize];
            if l != 0 {
                let r = uf.find(l);
                uf.attach(r, min_root);
            }
            labels[v as usize] = min_root;
        }
    }

    // candidates that belong to no triangle are components of their own
    for (v, &m) in mask.iter().enumerate() {
        if m && labels[v] == 0 {
            labels[v] = uf.new_label();
        }
    }
    (labels, uf)
}

/// Partitions the candidate vertices into connected components.
///
/// Pass 1 scans triangles, issuing or merging labels; pass 2 flattens the
/// union-find forest; pass 3 rewrites every label to its root. Component ids are
/// then made dense in order of smallest member vertex.
pub fn label_components(mesh: &TriMesh, mask: &[bool]) -> Labeling {
    assert_eq!(mask.len(), mesh.vertex_count(), "candidate mask length");
    let (mut labels, mut uf) = scan(mesh, mask);
    uf.flatten();

    let mut dense = vec![0u32; uf.issued() + 1];
    let mut components: Vec<Vec<u32>> = Vec::new();
    for (v, label) in labels.iter_mut().enumerate() {
        if *label == 0 {
            continue;
        }
        let root = uf.parents()[*label as usize] as usize;
        if dense[root] == 0 {
            components.push(Vec::new());
            dense[root] = components.len() as u32;
        }
        *label = dense[root];
        components[*label as usize - 1].push(v as u32);
    }
    Labeling { labels, components }
}

/// A connected group of candidate vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobCandidate {
    pub id: u32,
    pub members: Vec<u32>,
    /// Median normalized density over the members.
    pub median: f64,
}

impl BlobCandidate {
    pub fn vertex_count(&self) -> usize {
        self.members.len()
    }
}

/// Labels the candidates and attaches each component's median normalized density.
pub fn blob_candidates(mesh: &TriMesh, mask: &[bool], normalized: &[f64]) -> Vec<BlobCandidate> {
    let labeling = label_components(mesh, mask);
    let mut scratch = Vec::new();
    labeling
        .components
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            scratch.clear();
            scratch.extend(members.iter().map(|&v| normalized[v as usize]));
            let median = median_in_place(&mut scratch);
            BlobCandidate {
                id: id as u32,
                members,
                median,
            }
        })
        .collect()
}

/// Middle order statistic; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Statistics("median of an empty set".into()));
    }
    Ok(median_in_place(&mut values.to_vec()))
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + m) * 0.5
    }
}

/// `max(min_abs_median, min(min_rel_median * mu2, max_abs_median))`.
pub fn median_threshold(params: &BlobParams, mu2: f64) -> f64 {
    params
        .min_abs_median
        .max((params.min_rel_median * mu2).min(params.max_abs_median))
}

/// Keeps components with at least `min_area` vertices whose median exceeds
/// [`median_threshold`].
pub fn accept_blobs(components: Vec<BlobCandidate>, mu2: f64, params: &BlobParams) -> Vec<BlobCandidate> {
    let cut = median_threshold(params, mu2);
    components
        .into_iter()
        .filter(|c| c.vertex_count() >= params.min_area && c.median > cut)
        .collect()
}
