//! Interaction graphs and the cognitive-dissonance detector.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::lexicon::{Stance, StanceClassifier};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown user `{0}`")]
pub struct UnknownUserError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Retweet,
    Quote,
    Reply,
    Mention,
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InteractionKind::Retweet => "retweet",
            InteractionKind::Quote => "quote",
            InteractionKind::Reply => "reply",
            InteractionKind::Mention => "mention",
        })
    }
}

/// Directed interaction: `from` authored `tweet`, which targets `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interaction {
    pub from: usize,
    pub to: usize,
    pub kind: InteractionKind,
    pub tweet: usize,
}

/// All interactions of a corpus, indexed by user. Targets are the author of
/// the retweeted, quoted or replied-to tweet (when it is in the corpus) and
/// every mentioned user known to the corpus. Self-interactions are dropped.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    edges: Vec<Interaction>,
    by_user: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl InteractionGraph {
    pub fn build(corpus: &Corpus) -> InteractionGraph {
        let mut edges = Vec::new();
        for (idx, tweet) in corpus.tweets().iter().enumerate() {
            let from = corpus.author_index(idx);
            let mut push = |to: usize, kind| {
                if to != from {
                    edges.push(Interaction { from, to, kind, tweet: idx });
                }
            };
            let sources = [
                (&tweet.retweeted_tweet_id, InteractionKind::Retweet),
                (&tweet.quoted_tweet_id, InteractionKind::Quote),
                (&tweet.replied_to_tweet_id, InteractionKind::Reply),
            ];
            for (id, kind) in sources {
                if let Some(src) = id.as_deref().and_then(|id| corpus.tweet_index(id)) {
                    push(corpus.author_index(src), kind);
                }
            }
            for user in &tweet.mentioned_user_ids {
                if let Some(to) = corpus.user_index(user) {
                    push(to, InteractionKind::Mention);
                }
            }
        }
        let n = corpus.profiles().len();
        let mut by_user = vec![Vec::new(); n];
        let mut neighbor_sets = vec![BTreeSet::new(); n];
        for (i, e) in edges.iter().enumerate() {
            by_user[e.from].push(i);
            by_user[e.to].push(i);
            neighbor_sets[e.from].insert(e.to);
            neighbor_sets[e.to].insert(e.from);
        }
        InteractionGraph {
            edges,
            by_user,
            neighbors: neighbor_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn edges(&self) -> &[Interaction] {
        &self.edges
    }

    /// Neighbor user indices of `user`, ascending.
    pub fn neighbors(&self, user: usize) -> &[usize] {
        &self.neighbors[user]
    }

    /// Interactions touching `user`, in tweet order.
    pub fn interactions_of(&self, user: usize) -> impl Iterator<Item = &Interaction> {
        self.by_user[user].iter().map(|&i| &self.edges[i])
    }

    pub fn ego_network(&self, corpus: &Corpus, ego: usize) -> EgoNetwork {
        let profiles = corpus.profiles();
        let ego_id = profiles[ego].user_id.clone();
        let edges = self
            .interactions_of(ego)
            .map(|e| {
                let other = if e.from == ego { e.to } else { e.from };
                EgoEdge {
                    neighbor_id: profiles[other].user_id.clone(),
                    kind: e.kind,
                    tweet_id: corpus.tweets()[e.tweet].tweet_id.clone(),
                    outgoing: e.from == ego,
                }
            })
            .collect();
        EgoNetwork {
            ego_id,
            neighbors: self.neighbors[ego]
                .iter()
                .map(|&u| profiles[u].user_id.clone())
                .collect(),
            edges,
        }
    }

    /// Tab-separated edge list, one line per (ego, interaction) pair:
    /// `ego_id  neighbor_id  kind  tweet_id`.
    pub fn edge_list(&self, corpus: &Corpus) -> String {
        let mut out = String::new();
        for ego in 0..corpus.profiles().len() {
            for edge in self.ego_network(corpus, ego).edges {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    corpus.profiles()[ego].user_id,
                    edge.neighbor_id,
                    edge.kind,
                    edge.tweet_id
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EgoEdge {
    pub neighbor_id: String,
    pub kind: InteractionKind,
    pub tweet_id: String,
    /// True when the ego authored the interacting tweet.
    pub outgoing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EgoNetwork {
    pub ego_id: String,
    pub neighbors: BTreeSet<String>,
    pub edges: Vec<EgoEdge>,
}

pub fn build_ego_network(corpus: &Corpus, ego_id: &str) -> Result<EgoNetwork, UnknownUserError> {
    let ego = corpus
        .user_index(ego_id)
        .ok_or_else(|| UnknownUserError(ego_id.to_string()))?;
    Ok(InteractionGraph::build(corpus).ego_network(corpus, ego))
}

/// Consensus of an ego's neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Majority {
    Stance(Stance),
    NoMajority,
}

/// Modal non-neutral stance of every user over their own tweets; `None`
/// when they have no stance-bearing tweet or pro and anti tie.
pub fn modal_stances(corpus: &Corpus, stances: &[Stance]) -> Vec<Option<Stance>> {
    (0..corpus.profiles().len())
        .map(|u| {
            let (mut pro, mut anti) = (0usize, 0usize);
            for &t in corpus.timeline_indices(u) {
                match stances[t] {
                    Stance::Pro => pro += 1,
                    Stance::Anti => anti += 1,
                    Stance::Neutral => {}
                }
            }
            match Stance::from_counts(pro, anti) {
                Stance::Neutral => None,
                s => Some(s),
            }
        })
        .collect()
}

/// Strict majority among neighbors that hold a modal stance.
pub fn majority_of(neighbors: &[usize], modal: &[Option<Stance>]) -> Majority {
    let (mut pro, mut anti) = (0usize, 0usize);
    for &n in neighbors {
        match modal[n] {
            Some(Stance::Pro) => pro += 1,
            Some(Stance::Anti) => anti += 1,
            _ => {}
        }
    }
    match Stance::from_counts(pro, anti) {
        Stance::Neutral => Majority::NoMajority,
        s => Majority::Stance(s),
    }
}

pub fn network_majority_stance(
    network: &EgoNetwork,
    corpus: &Corpus,
    stance_fn: &dyn StanceClassifier,
) -> Majority {
    let (mut pro, mut anti) = (0usize, 0usize);
    for neighbor in &network.neighbors {
        let stances: Vec<Stance> = corpus
            .timeline(neighbor)
            .iter()
            .map(|t| stance_fn.stance(&t.text))
            .collect();
        let p = stances.iter().filter(|s| **s == Stance::Pro).count();
        let a = stances.iter().filter(|s| **s == Stance::Anti).count();
        match Stance::from_counts(p, a) {
            Stance::Pro => pro += 1,
            Stance::Anti => anti += 1,
            Stance::Neutral => {}
        }
    }
    match Stance::from_counts(pro, anti) {
        Stance::Neutral => Majority::NoMajority,
        s => Majority::Stance(s),
    }
}

/// Positions in `timeline` (a stance sequence, neutral entries allowed) of
/// tweets flagged for dissonance. After the first stance-bearing tweet that
/// differs from the majority, the next majority-aligned tweet is flagged,
/// as is every following stance-bearing tweet until the first one that
/// departs from the majority again.
pub fn detect_cognitive_dissonance(timeline: &[Stance], majority: Majority) -> Vec<usize> {
    let Majority::Stance(m) = majority else {
        return Vec::new();
    };
    let mut flagged = Vec::new();
    let mut diverged = false;
    for (pos, &s) in timeline.iter().enumerate() {
        if s.is_neutral() {
            continue;
        }
        if s == m {
            if diverged {
                flagged.push(pos);
            }
        } else if !flagged.is_empty() {
            break;
        } else {
            diverged = true;
        }
    }
    flagged
}

/// Dissonance flag per tweet index for the whole corpus.
pub fn dissonance_flags(corpus: &Corpus, graph: &InteractionGraph, stances: &[Stance]) -> Vec<bool> {
    let modal = modal_stances(corpus, stances);
    let per_user: Vec<Vec<usize>> = (0..corpus.profiles().len())
        .into_par_iter()
        .map(|u| {
            let timeline = corpus.timeline_indices(u);
            let seq: Vec<Stance> = timeline.iter().map(|&t| stances[t]).collect();
            let majority = majority_of(graph.neighbors(u), &modal);
            detect_cognitive_dissonance(&seq, majority)
                .into_iter()
                .map(|p| timeline[p])
                .collect()
        })
        .collect();
    let mut flags = vec![false; corpus.len()];
    for t in per_user.into_iter().flatten() {
        flags[t] = true;
    }
    flags
}
