use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use super::{CulturalCategory, Question, QuestionCluster, QuestionError};
use crate::backends::{Backends, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    /// Minimum cosine similarity for two questions to be linked.
    pub threshold: f64,
    /// Components smaller than this are discarded.
    pub min_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { threshold: 0.90, min_size: 8 }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), QuestionError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(QuestionError::Precondition(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        if self.min_size == 0 {
            return Err(QuestionError::Precondition("min_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterOutcome {
    pub clusters: Vec<QuestionCluster>,
    /// Questions dropped because their component was below `min_size`.
    pub discarded_questions: BTreeMap<CulturalCategory, usize>,
    pub discarded_components: BTreeMap<CulturalCategory, usize>,
}

/// Single-link clustering within each category: questions are linked when
/// their embeddings have cosine ≥ `threshold`, clusters are the connected
/// components with at least `min_size` members.
///
/// `vectors[i]` is the embedding of `questions[i]`. Questions without a
/// category are ignored. Cluster ids are assigned in category order, then by
/// the position of each cluster's first member.
pub fn cluster_by_embeddings(
    questions: &[Question],
    vectors: &[EmbeddingVector],
    params: ClusterParams,
) -> Result<ClusterOutcome, QuestionError> {
    params.validate()?;
    if questions.len() != vectors.len() {
        return Err(QuestionError::Precondition(format!(
            "{} questions but {} embeddings",
            questions.len(),
            vectors.len()
        )));
    }
    cluster_by_similarity(questions, |a, b| vectors[a].cosine(&vectors[b]), params)
}

/// [`cluster_by_embeddings`] over an arbitrary similarity, given as a
/// function of two indices into `questions`.
pub fn cluster_by_similarity(
    questions: &[Question],
    similarity: impl Fn(usize, usize) -> f64,
    params: ClusterParams,
) -> Result<ClusterOutcome, QuestionError> {
    params.validate()?;
    let mut by_category: BTreeMap<CulturalCategory, Vec<usize>> = BTreeMap::new();
    for (i, q) in questions.iter().enumerate() {
        if let Some(c) = q.category {
            by_category.entry(c).or_default().push(i);
        }
    }

    let mut out = ClusterOutcome::default();
    let mut next_id = 0u32;
    for (category, idx) in by_category {
        let mut uf = UnionFind::<usize>::new(idx.len());
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                if similarity(idx[a], idx[b]) >= params.threshold {
                    uf.union(a, b);
                }
            }
        }
        // root -> members, ordered by first member
        let mut components: Vec<(usize, Vec<usize>)> = Vec::new();
        for (local, &global) in idx.iter().enumerate() {
            let root = uf.find(local);
            match components.iter_mut().find(|(r, _)| *r == root) {
                Some((_, members)) => members.push(global),
                None => components.push((root, vec![global])),
            }
        }
        for (_, members) in components {
            if members.len() < params.min_size {
                *out.discarded_questions.entry(category).or_default() += members.len();
                *out.discarded_components.entry(category).or_default() += 1;
                continue;
            }
            let cluster_id = next_id;
            next_id += 1;
            out.clusters.push(QuestionCluster {
                cluster_id,
                category,
                members: members
                    .into_iter()
                    .map(|i| Question { cluster_id: Some(cluster_id), ..questions[i].clone() })
                    .collect(),
            });
        }
    }
    Ok(out)
}

/// Embeds the question texts and clusters them.
pub fn cluster_questions(
    filtered: &[Question],
    backends: &Backends,
    params: ClusterParams,
) -> Result<ClusterOutcome, QuestionError> {
    params.validate()?;
    if filtered.is_empty() {
        return Ok(ClusterOutcome::default());
    }
    let texts: Vec<String> = filtered.iter().map(|q| q.text.clone()).collect();
    let vectors = backends.embed_text(&texts)?;
    cluster_by_embeddings(filtered, &vectors, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str, c: CulturalCategory) -> Question {
        Question::new(id, format!("question {id}"), Some(c))
    }

    fn unit(angle_deg: f64) -> EmbeddingVector {
        let r = angle_deg.to_radians();
        EmbeddingVector(vec![r.cos(), r.sin()])
    }

    #[test]
    fn identical_texts_form_one_cluster() {
        let qs = vec![q("a", CulturalCategory::Clothing), q("b", CulturalCategory::Clothing)];
        let v = vec![EmbeddingVector(vec![1.0, 2.0]), EmbeddingVector(vec![1.0, 2.0])];
        let out = cluster_by_embeddings(&qs, &v, ClusterParams { threshold: 0.9, min_size: 2 }).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].members.len(), 2);
        assert!(out.clusters[0].members.iter().all(|m| m.cluster_id == Some(0)));
    }

    #[test]
    fn chain_links_through_intermediate() {
        // Three vectors in 3-D with pairwise cosines (a,b)=0.95, (b,c)=0.92, (a,c)=0.80,
        // built directly: a = e1, b = (0.95, s_b, 0),
        // c chosen so that a·c = 0.80 and b·c = 0.92.
        let sb = (1.0f64 - 0.95 * 0.95).sqrt();
        let c1 = 0.80;
        let c2 = (0.92 - 0.95 * c1) / sb;
        let c3 = (1.0 - c1 * c1 - c2 * c2).sqrt();
        let v = vec![
            EmbeddingVector(vec![1.0, 0.0, 0.0]),
            EmbeddingVector(vec![0.95, sb, 0.0]),
            EmbeddingVector(vec![c1, c2, c3]),
        ];
        assert!((v[0].cosine(&v[1]) - 0.95).abs() < 1e-12);
        assert!((v[1].cosine(&v[2]) - 0.92).abs() < 1e-12);
        assert!((v[0].cosine(&v[2]) - 0.80).abs() < 1e-12);
        let qs: Vec<_> = ["a", "b", "c"].iter().map(|id| q(id, CulturalCategory::Architecture)).collect();
        let out = cluster_by_embeddings(&qs, &v, ClusterParams { threshold: 0.9, min_size: 3 }).unwrap();
        assert_eq!(out.clusters.len(), 1);
        let ids: Vec<_> = out.clusters[0].members.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn chain_over_raw_similarity_matrix() {
        // (a,c) = 0.40 cannot come from real vectors alongside the other two
        // cosines, so this one runs on the matrix directly.
        let sim = [[1.0, 0.95, 0.40], [0.95, 1.0, 0.92], [0.40, 0.92, 1.0]];
        let qs: Vec<_> = ["a", "b", "c"].iter().map(|id| q(id, CulturalCategory::Architecture)).collect();
        let out = cluster_by_similarity(&qs, |i, j| sim[i][j], ClusterParams { threshold: 0.9, min_size: 3 }).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].members.len(), 3);
    }

    #[test]
    fn clusters_never_span_categories() {
        let qs = vec![q("a", CulturalCategory::Clothing), q("b", CulturalCategory::Religion)];
        let v = vec![unit(0.0), unit(0.0)];
        let out = cluster_by_embeddings(&qs, &v, ClusterParams { threshold: 0.9, min_size: 1 }).unwrap();
        assert_eq!(out.clusters.len(), 2);
        assert_ne!(out.clusters[0].category, out.clusters[1].category);
    }

    #[test]
    fn small_components_are_discarded_and_counted() {
        let qs: Vec<_> = (0..5).map(|i| q(&i.to_string(), CulturalCategory::FoodDrink)).collect();
        let v = vec![unit(0.0), unit(1.0), unit(2.0), unit(60.0), unit(120.0)];
        let out = cluster_by_embeddings(&qs, &v, ClusterParams { threshold: 0.9, min_size: 3 }).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.discarded_questions[&CulturalCategory::FoodDrink], 2);
        assert_eq!(out.discarded_components[&CulturalCategory::FoodDrink], 2);
    }

    #[test]
    fn parameter_validation() {
        let bad = [ClusterParams { threshold: 0.0, min_size: 8 }, ClusterParams { threshold: 1.1, min_size: 8 }, ClusterParams { threshold: 0.9, min_size: 0 }];
        for p in bad {
            assert!(cluster_by_embeddings(&[], &[], p).is_err());
        }
        assert!(cluster_by_embeddings(&[], &[], ClusterParams { threshold: 1.0, min_size: 1 }).is_ok());
    }
}
