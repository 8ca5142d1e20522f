use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{StudentId, TaskId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPair {
    pub reviewer_id: StudentId,
    pub author_id: StudentId,
}

/// Who reviews whom in one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task_id: TaskId,
    pub k: usize,
    pub seed: u64,
    pub pairs: Vec<ReviewPair>,
}

impl Assignment {
    /// Seeded ring: the roster is sorted, shuffled with `seed`, and the
    /// student at ring position `i` reviews positions `i+1 ..= i+k` (mod N).
    pub fn ring(task_id: TaskId, roster: &[StudentId], k: usize, seed: u64) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidFanOut);
        }
        let n = roster.len();
        if n <= k {
            return Err(Error::RosterTooSmall { students: n, k });
        }
        let mut ring = roster.to_vec();
        ring.sort();
        ring.dedup();
        if ring.len() != n {
            let dup = roster
                .iter()
                .enumerate()
                .find(|(i, s)| roster[..*i].contains(s))
                .map(|(_, s)| s.to_string())
                .unwrap_or_default();
            return Err(Error::DuplicateStudent(dup));
        }
        ring.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        let mut pairs = Vec::with_capacity(n * k);
        for (i, reviewer) in ring.iter().enumerate() {
            for step in 1..=k {
                pairs.push(ReviewPair {
                    reviewer_id: reviewer.clone(),
                    author_id: ring[(i + step) % n].clone(),
                });
            }
        }
        Ok(Assignment {
            task_id,
            k,
            seed,
            pairs,
        })
    }

    pub fn contains(&self, reviewer: &StudentId, author: &StudentId) -> bool {
        self.pairs
            .iter()
            .any(|p| &p.reviewer_id == reviewer && &p.author_id == author)
    }

    /// Authors `reviewer` must review, in assignment order.
    pub fn authors_of<'a>(&'a self, reviewer: &'a StudentId) -> impl Iterator<Item = &'a StudentId> {
        self.pairs
            .iter()
            .filter(move |p| &p.reviewer_id == reviewer)
            .map(|p| &p.author_id)
    }

    /// Reviewers assigned to `author`, in assignment order.
    pub fn reviewers_of<'a>(&'a self, author: &'a StudentId) -> impl Iterator<Item = &'a StudentId> {
        self.pairs
            .iter()
            .filter(move |p| &p.author_id == author)
            .map(|p| &p.reviewer_id)
    }

    pub fn students(&self) -> Vec<StudentId> {
        let mut all: Vec<StudentId> = self.pairs.iter().map(|p| p.reviewer_id.clone()).collect();
        all.sort();
        all.dedup();
        all
    }

    /// Every student reviews exactly `k` others and is reviewed exactly `k`
    /// times; no self-review and no repeated pair.
    pub fn is_k_regular(&self) -> bool {
        use std::collections::{HashMap, HashSet};
        let mut out: HashMap<&StudentId, usize> = HashMap::new();
        let mut inn: HashMap<&StudentId, usize> = HashMap::new();
        let mut seen = HashSet::new();
        for p in &self.pairs {
            if p.reviewer_id == p.author_id || !seen.insert((&p.reviewer_id, &p.author_id)) {
                return false;
            }
            *out.entry(&p.reviewer_id).or_default() += 1;
            *inn.entry(&p.author_id).or_default() += 1;
        }
        out.len() == inn.len()
            && out.values().all(|&c| c == self.k)
            && inn.values().all(|&c| c == self.k)
    }
}
