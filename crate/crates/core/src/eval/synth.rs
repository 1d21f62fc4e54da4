//! Planted-signal review generator.
//!
//! Six themes each own a set of content words and one positive and one
//! negative opinion word. A review mixes its course's themes; its rating is a
//! clipped affine function of a theme-quality latent, a sentiment latent that
//! sets the opinion-word polarity, and an engagement latent that drives the
//! behavioral logs.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Gamma, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::corpus::{BehaviorRaw, Completion, Dataset, ReviewRecord};
use crate::seed;

pub const THEMES: usize = 6;

const CONTENT_WORDS: [&[&str]; THEMES] = [
    &[
        "instructor",
        "lecturer",
        "professor",
        "teacher",
        "explains",
        "explanation",
        "lectures",
        "speaking",
        "voice",
        "accent",
        "presenter",
        "teaching",
        "examples",
        "enthusiasm",
        "delivery",
        "pace",
        "clarity",
        "charisma",
        "tutor",
        "speaker",
        "educator",
        "speech",
        "tone",
        "humor",
        "jokes",
        "storytelling",
        "whiteboard",
        "demonstrations",
        "narration",
        "pronunciation",
        "articulate",
        "passion",
        "expertise",
        "demeanor",
        "personality",
        "mannerisms",
        "gestures",
        "stammering",
        "monotone",
        "rambling",
        "anecdotes",
        "analogies",
        "illustrations",
        "diagrams",
        "walkthrough",
        "sketches",
        "chalkboard",
        "microphone",
        "diction",
        "cadence",
        "eloquence",
        "rapport",
        "approachable",
        "instructors",
        "lecturers",
        "professors",
        "teachers",
        "speakers",
        "presenters",
        "lecturing",
    ],
    &[
        "content",
        "material",
        "syllabus",
        "modules",
        "chapters",
        "topics",
        "curriculum",
        "readings",
        "concepts",
        "theory",
        "depth",
        "coverage",
        "textbook",
        "slides",
        "outline",
        "lessons",
        "units",
        "subject",
        "knowledge",
        "sections",
        "fundamentals",
        "principles",
        "frameworks",
        "methodology",
        "case",
        "studies",
        "literature",
        "references",
        "bibliography",
        "handouts",
        "notes",
        "transcripts",
        "glossary",
        "definitions",
        "terminology",
        "prerequisites",
        "sequence",
        "scope",
        "breadth",
        "rigor",
        "accuracy",
        "relevance",
        "module",
        "chapter",
        "lesson",
        "unit",
        "topic",
        "reading",
        "concept",
        "theories",
        "articles",
        "papers",
        "research",
        "formulas",
        "proofs",
        "algorithms",
        "datasets",
        "summaries",
        "overview",
        "appendix",
    ],
    &[
        "quizzes",
        "exams",
        "assignments",
        "grading",
        "homework",
        "tests",
        "deadlines",
        "peer",
        "rubric",
        "scores",
        "graded",
        "exercises",
        "problems",
        "questions",
        "marks",
        "submission",
        "evaluation",
        "project",
        "feedback",
        "difficulty",
        "quiz",
        "exam",
        "assignment",
        "test",
        "deadline",
        "grade",
        "grades",
        "grader",
        "graders",
        "autograder",
        "midterm",
        "final",
        "finals",
        "essay",
        "essays",
        "capstone",
        "projects",
        "rubrics",
        "score",
        "points",
        "attempts",
        "retakes",
        "submissions",
        "extensions",
        "penalties",
        "plagiarism",
        "cheating",
        "solutions",
        "hints",
        "checkpoints",
        "milestones",
        "labs",
        "worksheets",
        "problemsets",
        "multiple",
        "choice",
        "timed",
        "proctored",
        "passing",
        "threshold",
    ],
    &[
        "platform",
        "website",
        "video",
        "player",
        "interface",
        "mobile",
        "app",
        "download",
        "subtitles",
        "streaming",
        "buffering",
        "login",
        "browser",
        "audio",
        "playback",
        "navigation",
        "layout",
        "captions",
        "server",
        "notifications",
        "videos",
        "site",
        "portal",
        "dashboard",
        "account",
        "password",
        "signup",
        "upload",
        "uploads",
        "downloads",
        "offline",
        "tablet",
        "desktop",
        "laptop",
        "android",
        "iphone",
        "ios",
        "resolution",
        "bandwidth",
        "latency",
        "codecs",
        "cache",
        "plugins",
        "widgets",
        "loading",
        "pixels",
        "hosting",
        "sync",
        "syncing",
        "settings",
        "menus",
        "buttons",
        "screen",
        "fullscreen",
        "speed",
        "autoplay",
        "cookies",
        "popups",
        "ads",
        "updates",
    ],
    &[
        "forum",
        "mentors",
        "community",
        "discussion",
        "staff",
        "support",
        "replies",
        "moderators",
        "answers",
        "help",
        "assistants",
        "office",
        "hours",
        "email",
        "responses",
        "classmates",
        "groups",
        "chat",
        "guidance",
        "threads",
        "mentor",
        "mentoring",
        "mentorship",
        "forums",
        "discussions",
        "moderator",
        "assistant",
        "helpdesk",
        "inbox",
        "emails",
        "messages",
        "messaging",
        "reply",
        "answer",
        "posts",
        "posting",
        "upvotes",
        "study",
        "buddies",
        "cohort",
        "cohorts",
        "networking",
        "meetups",
        "webinars",
        "hangouts",
        "coaching",
        "coach",
        "coaches",
        "advisor",
        "advisors",
        "counselors",
        "volunteers",
        "alumni",
        "peers",
        "teammates",
        "collaboration",
        "ticket",
        "tickets",
        "chatbot",
        "faq",
    ],
    &[
        "price",
        "certificate",
        "career",
        "cost",
        "money",
        "worth",
        "investment",
        "job",
        "skills",
        "degree",
        "fee",
        "subscription",
        "credential",
        "resume",
        "employers",
        "promotion",
        "salary",
        "payment",
        "refund",
        "discount",
        "pricing",
        "prices",
        "costs",
        "fees",
        "tuition",
        "budget",
        "dollars",
        "euros",
        "certificates",
        "certification",
        "diploma",
        "credentials",
        "careers",
        "jobs",
        "hiring",
        "interview",
        "interviews",
        "recruiters",
        "employer",
        "employment",
        "linkedin",
        "portfolio",
        "skill",
        "upskilling",
        "reskilling",
        "raise",
        "income",
        "payments",
        "installments",
        "refunds",
        "discounts",
        "coupon",
        "coupons",
        "scholarship",
        "scholarships",
        "financial",
        "aid",
        "trial",
        "membership",
        "renewal",
    ],
];

const OPINION_WORDS: [(&str, &str); THEMES] = [
    ("engaging", "boring"),
    ("thorough", "shallow"),
    ("fair", "unfair"),
    ("smooth", "buggy"),
    ("responsive", "unresponsive"),
    ("worthwhile", "overpriced"),
];

/// Rating offset contributed by each theme, scaled by the theme weight.
const THEME_QUALITY: [f64; THEMES] = [-2.0, -1.2, -0.4, 0.4, 1.2, 2.0];

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ru", "te", "va", "ne", "so", "pi", "du", "fe", "go", "ha", "ji", "ku", "ly", "mo", "ze", "bi",
    "wu",
];

const DAY: i64 = 86_400;
const EPOCH_2023: i64 = 1_672_531_200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    /// Overrides the global noise level for reviews in this domain.
    #[serde(default)]
    pub noise: Option<f64>,
}

impl DomainSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_reviews: usize,
    pub n_courses: usize,
    pub topic_weight: f64,
    pub sentiment_weight: f64,
    pub behavior_weight: f64,
    pub noise: f64,
    pub seed: u64,
    pub domains: Vec<DomainSpec>,
    /// Scale of the per-review theme prior around its course profile; lower
    /// values give reviews that dwell on fewer themes.
    pub theme_concentration: f64,
    /// Share of tokens that are opinion words.
    pub opinion_share: f64,
    /// Share of tokens that are theme content words; the rest is filler.
    pub content_share: f64,
    /// Median review length in tokens.
    pub median_length: f64,
    /// Log-scale spread of review lengths.
    pub length_spread: f64,
    /// Slope of opinion polarity against the sentiment latent.
    pub polarity_sharpness: f64,
    pub filler_vocabulary: usize,
    /// Probability that any one behavioral feature is unobserved.
    pub behavior_missing: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_reviews: 5000,
            n_courses: 60,
            topic_weight: 1.1,
            sentiment_weight: 1.0,
            behavior_weight: 0.35,
            noise: 0.35,
            seed: 7,
            domains: vec![
                DomainSpec::new("cs"),
                DomainSpec::new("business"),
                DomainSpec::new("humanities"),
            ],
            theme_concentration: 3.0,
            opinion_share: 0.35,
            content_share: 0.35,
            median_length: 12.0,
            length_spread: 0.8,
            polarity_sharpness: 2.0,
            filler_vocabulary: 2000,
            behavior_missing: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EvalError::Config(m.to_string()));
        let weights = [self.topic_weight, self.sentiment_weight, self.behavior_weight];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("signal weights must be finite and >= 0");
        }
        if !(self.noise >= 0.0) || self.domains.iter().any(|d| d.noise.is_some_and(|n| !(n >= 0.0))) {
            return bad("noise must be >= 0");
        }
        if weights.iter().all(|&w| w == 0.0) && self.noise == 0.0 {
            return bad("at least one signal weight or the noise must be positive");
        }
        if self.n_reviews == 0 || self.n_courses == 0 || self.domains.is_empty() {
            return bad("need at least one review, course and domain");
        }
        if !(0.0..=1.0).contains(&self.opinion_share)
            || !(0.0..=1.0).contains(&self.content_share)
            || self.opinion_share + self.content_share > 1.0
        {
            return bad("token shares must lie in [0, 1] and sum to at most 1");
        }
        if !(self.theme_concentration > 0.0 && self.theme_concentration.is_finite()) {
            return bad("theme_concentration must be positive");
        }
        if !(self.median_length >= 1.0) || !(self.length_spread >= 0.0) || self.filler_vocabulary == 0 {
            return bad("length and vocabulary parameters out of range");
        }
        if !(0.0..1.0).contains(&self.behavior_missing) {
            return bad("behavior_missing must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Planted values behind one review's rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    /// Theme-quality signal, `θ · quality`.
    pub topic: f64,
    pub sentiment: f64,
    pub behavior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub latents: BTreeMap<String, Latents>,
}

fn pseudo_word(mut index: usize) -> String {
    let mut word = String::new();
    for _ in 0..3 {
        word.push_str(SYLLABLES[index % SYLLABLES.len()]);
        index /= SYLLABLES.len();
    }
    word
}

fn zipf_weights(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| (r as f64).powf(-exponent))).unwrap()
}

fn dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng).max(1e-300))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, "synthetic"));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let filler: Vec<String> = (0..spec.filler_vocabulary).map(pseudo_word).collect();
    let filler_dist = zipf_weights(filler.len(), 1.1);
    let length_dist = LogNormal::new(spec.median_length.ln(), spec.length_spread).unwrap();

    let courses: Vec<Vec<f64>> = (0..spec.n_courses)
        .map(|_| dirichlet(&[0.3; THEMES], &mut rng))
        .collect();

    let mut records = Vec::with_capacity(spec.n_reviews);
    let mut latents = BTreeMap::new();
    for i in 0..spec.n_reviews {
        let course = rng.random_range(0..spec.n_courses);
        let domain = &spec.domains[course % spec.domains.len()];
        let alpha: Vec<f64> = courses[course]
            .iter()
            .map(|p| spec.theme_concentration * p + 0.05)
            .collect();
        let theta = dirichlet(&alpha, &mut rng);
        let theme_dist = WeightedIndex::new(&theta).unwrap();
        let sentiment: f64 = normal.sample(&mut rng);
        let engagement: f64 = normal.sample(&mut rng);

        let length = (length_dist.sample(&mut rng) as usize).clamp(3, 200);
        let positive = 1.0 / (1.0 + (-spec.polarity_sharpness * sentiment).exp());
        let mut words: Vec<&str> = Vec::with_capacity(length);
        for _ in 0..length {
            let u: f64 = rng.random();
            let theme = theme_dist.sample(&mut rng);
            if u < spec.opinion_share {
                let (good, bad) = OPINION_WORDS[theme];
                words.push(if rng.random::<f64>() < positive { good } else { bad });
            } else if u < spec.opinion_share + spec.content_share {
                let pool = CONTENT_WORDS[theme];
                words.push(pool[rng.random_range(0..pool.len())]);
            } else {
                words.push(&filler[filler_dist.sample(&mut rng)]);
            }
        }
        let mut text = words.join(" ");
        if let Some(first) = text.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        text.push('.');

        let topic: f64 = theta.iter().zip(THEME_QUALITY).map(|(t, q)| t * q).sum();
        let noise = domain.noise.unwrap_or(spec.noise);
        let eps: f64 = normal.sample(&mut rng);
        let rating = (3.0
            + spec.topic_weight * topic
            + spec.sentiment_weight * sentiment
            + spec.behavior_weight * engagement
            + noise * eps)
            .clamp(1.0, 5.0);

        let timestamp = EPOCH_2023 + rng.random_range(0..365 * DAY);
        let behavior = synth_behavior(engagement, timestamp, spec.behavior_missing, &mut rng);
        let completion = if rng.random::<f64>() < spec.behavior_missing {
            None
        } else {
            let level = engagement + 0.5 * normal.sample(&mut rng);
            Some(if level > 0.5 {
                Completion::Completed
            } else if level > -0.5 {
                Completion::InProgress
            } else {
                Completion::NotStarted
            })
        };

        let id = format!("rev{i:05}");
        latents.insert(
            id.clone(),
            Latents {
                topic,
                sentiment,
                behavior: engagement,
            },
        );
        records.push(ReviewRecord {
            id,
            course_id: format!("course{course:03}"),
            domain_tag: domain.name.clone(),
            text,
            rating,
            timestamp,
            behavior,
            completion,
        });
    }
    Ok(SyntheticData {
        dataset: Dataset::new(records),
        latents,
    })
}

fn synth_behavior<R: Rng>(
    engagement: f64,
    timestamp: i64,
    missing: f64,
    rng: &mut R,
) -> BTreeMap<String, Option<BehaviorRaw>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise = |rng: &mut R| -> f64 { normal.sample(rng) };
    let sessions = rng.random_range(1..=6);
    let watch_events: Vec<(i64, f64)> = (0..sessions)
        .map(|_| {
            let ts = timestamp - rng.random_range(0..60 * DAY);
            (ts, (30.0 + 10.0 * (engagement + 0.3 * noise(rng))).max(0.0))
        })
        .collect();
    let fraction = (0.5 + 0.2 * engagement + 0.1 * noise(rng)).clamp(0.0, 1.0);
    let quizzes = (3.0 + 1.5 * engagement + noise(rng)).round().max(0.0);
    let posts = Poisson::new(2.0).unwrap().sample(rng);
    let revisits = (2.0 + engagement + noise(rng)).round().max(0.0);
    let values = [
        ("watch_time", BehaviorRaw::Events(watch_events)),
        ("watch_fraction", BehaviorRaw::Scalar(fraction)),
        ("quiz_attempts", BehaviorRaw::Scalar(quizzes)),
        ("forum_posts", BehaviorRaw::Scalar(posts)),
        ("revisit_count", BehaviorRaw::Scalar(revisits)),
    ];
    values
        .into_iter()
        .map(|(k, v)| (k.to_string(), (rng.random::<f64>() >= missing).then_some(v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tokenizer;
    use crate::regress::{fit_linear, Data};

    fn small(n: usize) -> SyntheticSpec {
        SyntheticSpec {
            n_reviews: n,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_synthetic(&small(300)).unwrap();
        assert_eq!(a, generate_synthetic(&small(300)).unwrap());
        for r in a.dataset.iter() {
            assert!((1.0..=5.0).contains(&r.rating));
            assert!(!r.text.is_empty());
            assert_eq!(r.behavior.len(), 5);
        }
        let other = generate_synthetic(&SyntheticSpec { seed: 8, ..small(300) }).unwrap();
        assert_ne!(a.dataset, other.dataset);
    }

    #[test]
    fn vocabulary_avoids_stopwords_and_collisions() {
        let tok = Tokenizer::default();
        let mut all: Vec<String> = CONTENT_WORDS
            .iter()
            .flat_map(|w| w.iter().map(|s| s.to_string()))
            .collect();
        all.extend(OPINION_WORDS.iter().flat_map(|(a, b)| [a.to_string(), b.to_string()]));
        all.extend((0..2000).map(pseudo_word));
        for w in &all {
            assert!(!tok.is_stopword(w), "{w}");
            assert_eq!(tok.terms(w), vec![w.clone()]);
        }
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn noiseless_sentiment_only_is_a_function_of_the_latent() {
        let spec = SyntheticSpec {
            topic_weight: 0.0,
            behavior_weight: 0.0,
            noise: 0.0,
            ..small(200)
        };
        let data = generate_synthetic(&spec).unwrap();
        for r in data.dataset.iter() {
            let s = data.latents[&r.id].sentiment;
            assert_eq!(r.rating, (3.0 + spec.sentiment_weight * s).clamp(1.0, 5.0));
        }
    }

    #[test]
    fn oracle_on_latents_reaches_noise_floor() {
        let spec = SyntheticSpec::default();
        let data = generate_synthetic(&spec).unwrap();
        let x: Vec<f64> = data
            .dataset
            .iter()
            .flat_map(|r| {
                let l = data.latents[&r.id];
                [l.topic, l.sentiment, l.behavior]
            })
            .collect();
        let y: Vec<f64> = data.dataset.iter().map(|r| r.rating).collect();
        let d = Data { x: &x, y: &y, p: 3 };
        let m = fit_linear(&d, 0.0).unwrap();
        let pred: Vec<f64> = (0..d.n()).map(|i| m.predict_row(d.row(i))).collect();
        let rmse = crate::eval::rmse(&y, &pred).unwrap();
        assert!(rmse <= spec.noise + 0.05, "oracle rmse {rmse}");
    }

    #[test]
    fn sentiment_is_the_strongest_planted_signal() {
        let spec = SyntheticSpec::default();
        let data = generate_synthetic(&spec).unwrap();
        let variance = |f: fn(&Latents) -> f64| {
            let v: Vec<f64> = data.latents.values().map(f).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
        };
        let topic = spec.topic_weight.powi(2) * variance(|l| l.topic);
        let sentiment = spec.sentiment_weight.powi(2) * variance(|l| l.sentiment);
        let behavior = spec.behavior_weight.powi(2) * variance(|l| l.behavior);
        assert!(sentiment > topic && topic > behavior, "{sentiment} {topic} {behavior}");
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            SyntheticSpec {
                topic_weight: -1.0,
                ..small(10)
            },
            SyntheticSpec {
                topic_weight: 0.0,
                sentiment_weight: 0.0,
                behavior_weight: 0.0,
                noise: 0.0,
                ..small(10)
            },
            SyntheticSpec {
                opinion_share: 0.8,
                content_share: 0.5,
                ..small(10)
            },
        ] {
            assert!(generate_synthetic(&spec).is_err());
        }
    }
}
