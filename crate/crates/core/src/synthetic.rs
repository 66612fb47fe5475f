//! Seeded synthetic corpora with a planted lexical signal.
//!
//! Claim texts are drawn from a neutral vocabulary, so the claim alone says
//! nothing about the label. Comments on fake claims carry [`PLANTED_TOKEN`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{assemble, Claim, DatasetError, EngagementKind, EngagementNode, MultiPlatformSample, Platform, Source, ROOT_PARENT};

pub const PLANTED_TOKEN: &str = "hoax";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalLayout {
    /// Every fake-claim comment on every platform carries the token.
    Everywhere,
    /// Half of the fake claims carry it on youtube only, the other half on
    /// x only. Reddit comments carry it at random regardless of label.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Total claims; half fake, half true.
    pub claims: usize,
    pub seed: u64,
    pub layout: SignalLayout,
    pub min_comments: usize,
    pub max_comments: usize,
    pub words_per_comment: usize,
    /// Comment vocabulary size.
    pub vocab: usize,
    /// Claim vocabulary size.
    pub claim_vocab: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            claims: 80,
            seed: 0,
            layout: SignalLayout::Everywhere,
            min_comments: 2,
            max_comments: 5,
            words_per_comment: 6,
            vocab: 200,
            claim_vocab: 20,
        }
    }
}

fn words(rng: &mut ChaCha8Rng, vocab: usize, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{:03}", rng.gen_range(0..vocab))).collect()
}

fn carries_signal(layout: SignalLayout, fake: bool, fake_index: usize, k: Platform, rng: &mut ChaCha8Rng) -> bool {
    match layout {
        SignalLayout::Everywhere => fake,
        SignalLayout::Split => match k {
            Platform::Reddit => rng.gen_bool(0.5),
            Platform::Youtube => fake && fake_index.is_multiple_of(2),
            Platform::X => fake && !fake_index.is_multiple_of(2),
        },
    }
}

/// Raw records for a synthetic corpus. Every claim has a tree on every
/// platform.
pub fn generate(cfg: &SyntheticConfig) -> (Vec<Claim>, Vec<EngagementNode>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = cfg.vocab.max(1);
    let mut labels: Vec<bool> = (0..cfg.claims).map(|i| i < cfg.claims / 2).collect();
    labels.shuffle(&mut rng);
    let mut claims = Vec::with_capacity(cfg.claims);
    let mut engagements = Vec::new();
    let mut fake_seen = 0;
    for (i, &fake) in labels.iter().enumerate() {
        let id = format!("c{i:04}");
        let source = if i % 2 == 0 { Source::Politifact } else { Source::Snopes };
        let raw = match (fake, source) {
            (true, Source::Politifact) => "pants-on-fire",
            (true, Source::Snopes) => "false",
            (false, Source::Politifact) => "mostly-true",
            (false, Source::Snopes) => "true",
        };
        let text = words(&mut rng, cfg.claim_vocab.max(1), 8).join(" ");
        claims.push(Claim::new(&id, &text, source, raw).expect("known label"));
        let fake_index = fake_seen;
        if fake {
            fake_seen += 1;
        }
        for k in Platform::ALL {
            let n = rng.gen_range(cfg.min_comments..=cfg.max_comments.max(cfg.min_comments));
            let mut ids: Vec<String> = Vec::with_capacity(n);
            for j in 0..n {
                let eid = format!("{id}-{k}-{j}");
                let parent = match rng.gen_range(0..=ids.len()) {
                    0 => ROOT_PARENT.to_string(),
                    p => ids[p - 1].clone(),
                };
                let mut toks = words(&mut rng, vocab, cfg.words_per_comment);
                if carries_signal(cfg.layout, fake, fake_index, k, &mut rng) {
                    let at = rng.gen_range(0..=toks.len());
                    toks.insert(at, PLANTED_TOKEN.to_string());
                }
                engagements.push(EngagementNode {
                    id: eid.clone(),
                    claim_id: id.clone(),
                    platform: k,
                    parent_id: parent,
                    text: toks.join(" "),
                    kind: EngagementKind::Comment,
                    like_count: Some(rng.gen_range(0..100)),
                    timestamp: Some(j as i64),
                });
                ids.push(eid);
            }
        }
    }
    (claims, engagements)
}

pub fn generate_samples(cfg: &SyntheticConfig) -> Result<Vec<MultiPlatformSample>, DatasetError> {
    let (claims, engagements) = generate(cfg);
    assemble(claims, engagements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;

    #[test]
    fn balanced_and_complete() {
        let s = generate_samples(&SyntheticConfig::default()).unwrap();
        assert_eq!(s.len(), 80);
        assert_eq!(s.iter().filter(|x| x.label() == Label::Fake).count(), 40);
        assert!(s.iter().all(|x| x.trees.len() == 3));
    }

    #[test]
    fn signal_only_in_fake_comments() {
        let (claims, es) = generate(&SyntheticConfig::default());
        for e in &es {
            let fake = claims.iter().find(|c| c.id == e.claim_id).unwrap().label == Label::Fake;
            assert_eq!(e.text.split(' ').any(|t| t == PLANTED_TOKEN), fake);
        }
        assert!(claims.iter().all(|c| !c.text.contains(PLANTED_TOKEN)));
    }

    #[test]
    fn split_layout_places_signal_on_one_platform() {
        let cfg = SyntheticConfig {
            layout: SignalLayout::Split,
            ..Default::default()
        };
        let s = generate_samples(&cfg).unwrap();
        let has = |x: &MultiPlatformSample, k: Platform| {
            x.trees[&k].engagements().iter().any(|e| e.text.contains(PLANTED_TOKEN))
        };
        let mut counts = [0, 0];
        for x in &s {
            let (yt, xx) = (has(x, Platform::Youtube), has(x, Platform::X));
            if x.label() == Label::Fake {
                assert!(yt ^ xx);
                counts[yt as usize] += 1;
            } else {
                assert!(!yt && !xx);
            }
        }
        assert_eq!(counts, [20, 20]);
    }

    #[test]
    fn seeded() {
        let a = generate(&SyntheticConfig::default());
        let b = generate(&SyntheticConfig::default());
        assert_eq!(a, b);
        let c = generate(&SyntheticConfig {
            seed: 1,
            ..Default::default()
        });
        assert_ne!(a.1, c.1);
    }
}
