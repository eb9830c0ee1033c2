//! Seeded synthetic event logs with planted user archetypes.
//!
//! Each focal user opens a new community with probability `exploration`
//! (choosing among unvisited communities by `volume^size_preference`) and
//! otherwise revisits one with weight growing in its past post count. Content words
//! drift from the user's own topic toward the community's at the
//! archetype's adaptation rate; function words follow the user's style
//! scaled by a per-community shift. Light background users supply most of
//! the community volume.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PostEvent;
use crate::labeling::DEFAULT_SOF;

const DAY: f64 = 86_400.0;

pub const STOPWORDS: [&str; 40] = [
    "the", "a", "to", "of", "and", "in", "is", "it", "that", "for", "on", "with", "was", "this", "but", "be", "are",
    "have", "not", "you", "i", "me", "my", "mine", "myself", "so", "at", "as", "they", "we", "just", "what", "if",
    "or", "all", "like", "do", "there", "about", "from",
];

const STOPWORD_TAGS: [&str; 40] = [
    "DT", "DT", "TO", "IN", "CC", "IN", "VBZ", "PRP", "IN", "IN", "IN", "IN", "VBD", "DT", "CC", "VB", "VBP", "VBP",
    "RB", "PRP", "PRP", "PRP", "PRP$", "PRP", "PRP", "RB", "IN", "IN", "PRP", "PRP", "RB", "WP", "IN", "CC", "DT",
    "IN", "VBP", "EX", "IN", "IN",
];

const CONTENT_TAGS: [&str; 10] = ["NN", "NN", "NN", "NN", "NNS", "VB", "VBD", "JJ", "JJ", "RB"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeConfig {
    pub name: String,
    /// Relative population share.
    pub share: f64,
    /// Probability that a post (after the first) opens a new community.
    pub exploration: f64,
    /// Exponent on community volume when choosing a new community.
    pub size_preference: f64,
    /// Per-post rate at which content drifts toward the community topic.
    pub adaptation: f64,
    /// Multiplier on expected feedback.
    pub feedback_quality: f64,
    pub mean_gap_days: f64,
    /// Probability that the user stops posting before SOF.
    pub departure_prob: f64,
    /// Mean number of posts beyond the first 50 before SOF.
    pub mean_extra_posts: f64,
}

impl ArchetypeConfig {
    fn validate(&self) -> Result<()> {
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InfeasibleSpec(format!("{}: {what} must be in [0, 1]", self.name)))
            }
        };
        unit(self.exploration, "exploration")?;
        unit(self.adaptation, "adaptation")?;
        unit(self.departure_prob, "departure_prob")?;
        if !(self.share >= 0.0) || !(self.mean_gap_days > 0.0) || !(self.feedback_quality > 0.0) {
            return Err(Error::InfeasibleSpec(format!(
                "{}: share must be non-negative and gap and feedback quality positive",
                self.name
            )));
        }
        if !(self.mean_extra_posts >= 0.0) || !self.size_preference.is_finite() {
            return Err(Error::InfeasibleSpec(format!("{}: invalid lifespan or size preference", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub users: usize,
    pub archetypes: Vec<ArchetypeConfig>,
    pub communities: usize,
    /// Community `k` (0-based) has volume weight `(k+1)^-volume_exponent`.
    pub volume_exponent: f64,
    pub background_users: usize,
    pub background_posts_mean: f64,
    pub content_words: usize,
    pub topic_words: usize,
    /// Every community draws content from the same distribution.
    pub shared_topics: bool,
    /// Relative per-community perturbation of function-word frequencies.
    pub stopword_shift: f64,
    pub stopword_prob: f64,
    pub post_len_mean: f64,
    /// Revisits pick a community with weight `posts^revisit_exponent`.
    pub revisit_exponent: f64,
    /// Revisit weight multiplier for communities whose first post beat the
    /// community's typical median feedback.
    pub return_boost: f64,
    pub start: i64,
    pub sof: i64,
    /// Focal users who stay post until here.
    pub end: i64,
    pub with_text: bool,
    pub with_pos: bool,
    pub with_feedback: bool,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            users: 1000,
            archetypes: two_archetypes(),
            communities: 200,
            volume_exponent: 1.0,
            background_users: 2000,
            background_posts_mean: 6.0,
            content_words: 3000,
            topic_words: 150,
            shared_topics: false,
            stopword_shift: 0.2,
            stopword_prob: 0.45,
            post_len_mean: 8.0,
            revisit_exponent: 0.5,
            return_boost: 1.0,
            start: 1_262_304_000, // 2010-01-01
            sof: DEFAULT_SOF,
            end: 1_388_534_400, // 2014-01-01
            with_text: true,
            with_pos: true,
            with_feedback: true,
            seed: 0,
        }
    }
}

/// Settlers explore little, adapt quickly, get better feedback and mostly
/// stay; drifters do the opposite and mostly leave. Posting rates match.
pub fn two_archetypes() -> Vec<ArchetypeConfig> {
    vec![
        ArchetypeConfig {
            name: "settler".into(),
            share: 0.5,
            exploration: 0.12,
            size_preference: 0.5,
            adaptation: 0.15,
            feedback_quality: 1.6,
            mean_gap_days: 2.0,
            departure_prob: 0.15,
            mean_extra_posts: 30.0,
        },
        ArchetypeConfig {
            name: "drifter".into(),
            share: 0.5,
            exploration: 0.3,
            size_preference: 1.0,
            adaptation: 0.03,
            feedback_quality: 0.8,
            mean_gap_days: 2.0,
            departure_prob: 0.85,
            mean_extra_posts: 30.0,
        },
    ]
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.communities == 0 {
            return Err(Error::InfeasibleSpec("at least one community is required".into()));
        }
        if self.archetypes.is_empty() || !self.archetypes.iter().any(|a| a.share > 0.0) {
            return Err(Error::InfeasibleSpec("at least one archetype needs a positive share".into()));
        }
        for a in &self.archetypes {
            a.validate()?;
        }
        if !(self.start < self.sof && self.sof < self.end) {
            return Err(Error::InfeasibleSpec("need start < sof < end".into()));
        }
        if self.with_text && self.content_words == 0 {
            return Err(Error::InfeasibleSpec("text generation needs content words".into()));
        }
        if !(0.0..=1.0).contains(&self.stopword_prob) || !(0.0..1.0).contains(&self.stopword_shift) {
            return Err(Error::InfeasibleSpec("stopword probability and shift out of range".into()));
        }
        if !(self.return_boost > 0.0) || !(self.post_len_mean >= 0.0) || !self.revisit_exponent.is_finite() {
            return Err(Error::InfeasibleSpec("return boost must be positive and the revisit exponent finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub user: String,
    pub archetype: String,
    pub exploration: f64,
    pub size_preference: f64,
    pub adaptation: f64,
    pub feedback_quality: f64,
    pub mean_gap_days: f64,
    pub departing: bool,
    pub posts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Ordered by user id, then time.
    pub events: Vec<PostEvent>,
    pub truth: Vec<TruthRow>,
}

fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-s)).collect()
}

fn weighted(w: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(w).expect("positive weights")
}

struct Community {
    name: String,
    volume: f64,
    /// Content word ids and their sampler.
    topic: Vec<usize>,
    topic_dist: WeightedIndex<f64>,
    /// Multiplier per stopword.
    shift: Vec<f64>,
    feedback_base: f64,
    /// Median feedback of a quality-1 poster, estimated by simulation.
    typical_median: f64,
}

struct World {
    communities: Vec<Community>,
    content: Vec<String>,
    stop_base: Vec<f64>,
}

fn feedback_draw(rng: &mut ChaCha8Rng, mean: f64) -> i64 {
    let shape = 1.5;
    let lambda = Gamma::new(shape, mean / shape).expect("valid gamma").sample(rng);
    let up = if lambda > 0.0 {
        Poisson::new(lambda).expect("valid poisson").sample(rng) as i64
    } else {
        0
    };
    let down = Poisson::new(0.7).expect("valid poisson").sample(rng) as i64;
    up - down
}

fn build_world(spec: &PopulationSpec) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0, 0));
    let content: Vec<String> = (0..spec.content_words).map(|i| format!("w{i:04}")).collect();
    let global = zipf_weights(spec.content_words.max(1), 1.05);
    let k = spec.topic_words.clamp(1, spec.content_words.max(1));
    let mut communities = Vec::with_capacity(spec.communities);
    for c in 0..spec.communities {
        let topic: Vec<usize> = if spec.shared_topics || spec.content_words == 0 {
            (0..spec.content_words.max(1)).collect()
        } else {
            let mut ids: Vec<usize> = (0..spec.content_words).collect();
            ids.shuffle(&mut rng);
            ids.truncate(k);
            ids
        };
        let topic_dist = if spec.shared_topics {
            weighted(&global)
        } else {
            weighted(&zipf_weights(topic.len(), 1.1))
        };
        let shift = (0..STOPWORDS.len())
            .map(|_| if rng.random_bool(0.5) { 1.0 + spec.stopword_shift } else { 1.0 - spec.stopword_shift })
            .collect();
        let feedback_base = 2.0 + 4.0 * rng.random::<f64>();
        let mut sample: Vec<i64> = (0..401).map(|_| feedback_draw(&mut rng, feedback_base)).collect();
        sample.sort_unstable();
        communities.push(Community {
            name: format!("sub{c:03}"),
            volume: ((c + 1) as f64).powf(-spec.volume_exponent),
            topic,
            topic_dist,
            shift,
            feedback_base,
            typical_median: sample[200] as f64,
        });
    }
    World {
        communities,
        content,
        stop_base: zipf_weights(STOPWORDS.len(), 1.0),
    }
}

/// Per-user text style: stopword weights and a personal topic.
struct Voice {
    stop: Vec<f64>,
    topic: Vec<usize>,
    topic_dist: WeightedIndex<f64>,
}

fn make_voice(rng: &mut ChaCha8Rng, world: &World, spec: &PopulationSpec) -> Voice {
    let jitter = LogNormal::new(0.0, 0.3).expect("valid lognormal");
    let stop = world.stop_base.iter().map(|w| w * jitter.sample(rng)).collect();
    let mut topic: Vec<usize> = if spec.content_words > 0 {
        (0..spec.content_words).collect()
    } else {
        vec![0]
    };
    topic.shuffle(rng);
    topic.truncate(spec.topic_words.max(1));
    let topic_dist = weighted(&zipf_weights(topic.len(), 1.1));
    Voice { stop, topic, topic_dist }
}

fn make_post_text(
    rng: &mut ChaCha8Rng,
    world: &World,
    spec: &PopulationSpec,
    voice: &Voice,
    c: usize,
    familiarity: f64,
) -> (Vec<String>, Vec<String>) {
    let comm = &world.communities[c];
    let len = 1 + Poisson::new(spec.post_len_mean.max(1e-9)).expect("valid poisson").sample(rng) as usize;
    let stop_w: Vec<f64> = voice.stop.iter().zip(&comm.shift).map(|(a, b)| a * b).collect();
    let stop_dist = weighted(&stop_w);
    let mut tokens = Vec::with_capacity(len);
    let mut tags = Vec::with_capacity(len);
    for _ in 0..len {
        if spec.content_words == 0 || rng.random_bool(spec.stopword_prob) {
            let s = stop_dist.sample(rng);
            tokens.push(STOPWORDS[s].to_string());
            tags.push(STOPWORD_TAGS[s].to_string());
        } else {
            let id = if rng.random_bool(familiarity) {
                comm.topic[comm.topic_dist.sample(rng)]
            } else {
                voice.topic[voice.topic_dist.sample(rng)]
            };
            tokens.push(world.content[id].clone());
            tags.push(CONTENT_TAGS[id % CONTENT_TAGS.len()].to_string());
        }
    }
    (tokens, tags)
}

fn finish_event(
    spec: &PopulationSpec,
    user: &str,
    ts: i64,
    community: &str,
    text: Option<(Vec<String>, Vec<String>)>,
    feedback: i64,
) -> PostEvent {
    let (tokens, pos) = match text {
        Some((t, p)) => (Some(t), spec.with_pos.then_some(p)),
        None => (None, None),
    };
    PostEvent {
        user: user.to_string(),
        ts,
        community: community.to_string(),
        tokens,
        pos_tags: pos,
        feedback: spec.with_feedback.then_some(feedback),
    }
}

fn focal_user(spec: &PopulationSpec, world: &World, index: usize, arch: &ArchetypeConfig) -> (Vec<PostEvent>, TruthRow) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1, index as u64));
    let user = format!("u{index:05}");
    let departing = rng.random_bool(arch.departure_prob);
    let jitter: f64 = LogNormal::new(0.0, 0.4).expect("valid lognormal").sample(&mut rng);
    let gap_mean = arch.mean_gap_days * jitter.min(4.0);
    let gap = Exp::new(1.0 / gap_mean).expect("positive rate");
    let extra = if arch.mean_extra_posts > 0.0 {
        Exp::new(1.0 / arch.mean_extra_posts).expect("positive rate").sample(&mut rng).round() as usize
    } else {
        0
    };
    let pre = 50 + extra;
    let mut offsets = Vec::with_capacity(pre);
    let mut t = 0.0;
    for _ in 0..pre {
        offsets.push(t);
        t += gap.sample(&mut rng);
    }
    let span = offsets[pre - 1];
    let end_before_sof = if departing {
        spec.sof as f64 - DAY * (1.0 + 179.0 * rng.random::<f64>())
    } else {
        spec.sof as f64 - gap.sample(&mut rng) * DAY
    };
    let first = (end_before_sof - span * DAY).max(spec.start as f64);
    let mut times: Vec<i64> = offsets.iter().map(|o| (first + o * DAY) as i64).collect();
    if !departing {
        let mut ts = *times.last().expect("non-empty") as f64;
        loop {
            ts += gap.sample(&mut rng) * DAY;
            if ts >= spec.end as f64 {
                break;
            }
            times.push(ts as i64);
        }
    }
    // compress into [start, sof) if the lifetime had to be clipped at start
    if departing {
        let last = *times.last().expect("non-empty");
        if last >= spec.sof {
            let scale = (spec.sof - 1 - spec.start) as f64 / (last - spec.start).max(1) as f64;
            for v in &mut times {
                *v = spec.start + ((*v - spec.start) as f64 * scale) as i64;
            }
        }
    }

    let voice = make_voice(&mut rng, world, spec);
    let new_w: Vec<f64> = world
        .communities
        .iter()
        .map(|c| c.volume.powf(arch.size_preference))
        .collect();
    let mut visited: Vec<usize> = Vec::new();
    let mut counts: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut events = Vec::with_capacity(times.len());
    for (k, &ts) in times.iter().enumerate() {
        let explore = k == 0 || (visited.len() < world.communities.len() && rng.random_bool(arch.exploration));
        let c = if explore {
            let w: Vec<f64> = new_w
                .iter()
                .enumerate()
                .map(|(i, w)| if counts.contains_key(&i) { 0.0 } else { *w })
                .collect();
            let c = weighted(&w).sample(&mut rng);
            visited.push(c);
            c
        } else {
            let w: Vec<f64> = visited
                .iter()
                .map(|c| (counts[c].0 as f64).powf(spec.revisit_exponent) * counts[c].1)
                .collect();
            visited[weighted(&w).sample(&mut rng)]
        };
        let comm = &world.communities[c];
        let fb = feedback_draw(&mut rng, comm.feedback_base * arch.feedback_quality);
        let prior = counts.get(&c).map_or(0, |e| e.0);
        let entry = counts.entry(c).or_insert_with(|| {
            let sticky = if fb as f64 > comm.typical_median { spec.return_boost } else { 1.0 };
            (0, sticky)
        });
        entry.0 += 1;
        let text = spec.with_text.then(|| {
            let familiarity = 1.0 - 0.7 * (1.0 - arch.adaptation).powi(prior as i32);
            make_post_text(&mut rng, world, spec, &voice, c, familiarity)
        });
        events.push(finish_event(spec, &user, ts, &comm.name, text, fb));
    }
    let truth = TruthRow {
        user,
        archetype: arch.name.clone(),
        exploration: arch.exploration,
        size_preference: arch.size_preference,
        adaptation: arch.adaptation,
        feedback_quality: arch.feedback_quality,
        mean_gap_days: gap_mean,
        departing,
        posts: events.len(),
    };
    (events, truth)
}

fn background_user(spec: &PopulationSpec, world: &World, index: usize) -> Vec<PostEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 2, index as u64));
    let user = format!("b{index:05}");
    let n = 1 + Exp::new(1.0 / spec.background_posts_mean.max(1e-9))
        .expect("positive rate")
        .sample(&mut rng)
        .round() as usize;
    let centre = spec.start as f64 + rng.random::<f64>() * (spec.end - spec.start) as f64;
    let vol: Vec<f64> = world.communities.iter().map(|c| c.volume).collect();
    let dist = weighted(&vol);
    let voice = make_voice(&mut rng, world, spec);
    let mut times: Vec<i64> = (0..n)
        .map(|_| (centre + (rng.random::<f64>() - 0.5) * 60.0 * DAY).clamp(spec.start as f64, spec.end as f64 - 1.0) as i64)
        .collect();
    times.sort_unstable();
    times
        .into_iter()
        .map(|ts| {
            let c = dist.sample(&mut rng);
            let comm = &world.communities[c];
            let fb = feedback_draw(&mut rng, comm.feedback_base);
            let text = spec.with_text.then(|| make_post_text(&mut rng, world, spec, &voice, c, 1.0));
            finish_event(spec, &user, ts, &comm.name, text, fb)
        })
        .collect()
}

/// Archetype of each focal user: a deterministic largest-remainder
/// apportionment of the shares, shuffled under the seed.
fn assign_archetypes(spec: &PopulationSpec) -> Vec<usize> {
    let total: f64 = spec.archetypes.iter().map(|a| a.share).sum();
    let quotas: Vec<f64> = spec.archetypes.iter().map(|a| a.share / total * spec.users as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..quotas.len()).collect();
    rest.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut left = spec.users - counts.iter().sum::<usize>();
    for i in rest {
        if left == 0 {
            break;
        }
        if spec.archetypes[i].share > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    let mut out: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n)).collect();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 3, 0)));
    out
}

pub fn generate(spec: &PopulationSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let world = build_world(spec);
    let arch = assign_archetypes(spec);
    let idx: Vec<usize> = (0..spec.users).collect();
    let focal = crate::par::map(&idx, |&i| focal_user(spec, &world, i, &spec.archetypes[arch[i]]));
    let bidx: Vec<usize> = (0..spec.background_users).collect();
    let background = crate::par::map(&bidx, |&i| background_user(spec, &world, i));
    let mut events = Vec::new();
    for b in background {
        events.extend(b);
    }
    let mut truth = Vec::with_capacity(focal.len());
    for (ev, t) in focal {
        events.extend(ev);
        truth.push(t);
    }
    Ok(SynthOutput { events, truth })
}

/// Expected distinct communities after `x` posts for a user who opens a new
/// community with probability `r` on every post after the first (assuming
/// unvisited communities never run out).
pub fn expected_distinct(x: usize, r: f64) -> f64 {
    if x == 0 {
        0.0
    } else {
        1.0 + (x - 1) as f64 * r
    }
}
