//! Seeded mock scorers and random instances shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use funlib_core::lexicon::Lexicon;
use funlib_core::scorers::{
    sort_mask_scores, HumorScore, HumorScorer, Locale, MaskScore, MaskScorer, ScorerError, TokenEmbedder,
    TokenEmbedding,
};
use funlib_core::sentence_fill::Transformation;
use funlib_core::template::{parse_template, StoryTemplate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Singular nouns in the mock lexicon.
pub const LEGAL: [&str; 8] = ["apple", "banjo", "cactus", "dingo", "eagle", "falcon", "gopher", "hippo"];
/// Words the mock LM proposes that no hint accepts: blocked, unknown, or
/// not a single Latin word.
pub const ILLEGAL: [&str; 4] = ["quokka", "zebroid", "two words", "caf\u{e9}"];

pub fn lexicon() -> Lexicon {
    let mut tsv = String::new();
    for (i, w) in LEGAL.iter().chain(&["quokka"]).enumerate() {
        tsv.push_str(&format!("{w}\t{w}\tnoun\tsingular\t-\tanimal\t{}\n", i + 1));
    }
    Lexicon::parse_tsv(&tsv).unwrap().with_blocklist(["quokka".to_string()])
}

pub fn fnv(seed: u64, text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Proposes 1 to 6 legal words plus some illegal ones, with log-probs on a
/// coarse grid so ties occur. Depends only on the query text.
#[derive(Debug, Clone, Copy)]
pub struct MockMask {
    pub seed: u64,
}

impl MaskScorer for MockMask {
    fn mask_distribution(
        &self,
        masked: &str,
        _i: usize,
        top_k: usize,
        _l: Locale,
    ) -> Result<Vec<MaskScore>, ScorerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv(self.seed, masked));
        let mut words: Vec<&str> = LEGAL.to_vec();
        words.shuffle(&mut rng);
        words.truncate(rng.gen_range(1..=6));
        for w in ILLEGAL {
            if rng.gen_bool(0.5) {
                words.push(w);
            }
        }
        let mut out: Vec<MaskScore> = words
            .into_iter()
            .map(|w| MaskScore { word: w.to_string(), log_probability: -0.25 * f64::from(rng.gen_range(1..=8)) })
            .collect();
        sort_mask_scores(&mut out);
        out.truncate(top_k);
        Ok(out)
    }
}

/// `p_funny` on a grid of eighths, a hash of both texts.
#[derive(Debug, Clone, Copy)]
pub struct MockHumor {
    pub seed: u64,
}

impl HumorScorer for MockHumor {
    fn humor_probability(&self, masked: &str, filled: &str, _l: Locale) -> Result<HumorScore, ScorerError> {
        let h = fnv(fnv(self.seed, masked), filled);
        HumorScore::new((h % 9) as f64 / 8.0)
    }
}

/// Context-free 4-dimensional word vectors.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbed {
    pub seed: u64,
}

impl MockEmbed {
    pub fn word(&self, w: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv(self.seed, w));
        (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl TokenEmbedder for MockEmbed {
    fn token_embeddings(&self, text: &str, _l: Locale) -> Result<Vec<TokenEmbedding>, ScorerError> {
        Ok(text.split_whitespace().map(|w| TokenEmbedding(self.word(w))).collect())
    }
}

const FILLER: [&str; 5] = ["the", "big", "runs", "over", "with"];

/// A one-sentence template with 1..=`max_blanks` noun blanks among filler
/// words.
pub fn random_sentence(rng: &mut ChaCha8Rng, max_blanks: usize) -> StoryTemplate {
    let blanks = rng.gen_range(1..=max_blanks);
    let mut line = Vec::new();
    for _ in 0..blanks {
        for _ in 0..rng.gen_range(0..=2) {
            line.push(FILLER.choose(rng).unwrap().to_string());
        }
        line.push("{{noun}}".to_string());
    }
    if rng.gen_bool(0.5) {
        line.push(FILLER.choose(rng).unwrap().to_string());
    }
    parse_template("r", &format!("# Random\n{}", line.join(" "))).unwrap()
}

/// Tokens of a blank-free rendering, `None` at blanks, in order.
pub fn sentence_tokens(template: &StoryTemplate, sentence: usize) -> Vec<Option<String>> {
    template.sentences[sentence]
        .tokens
        .iter()
        .map(|t| match t {
            funlib_core::template::Token::Literal(w) => Some(w.clone()),
            funlib_core::template::Token::Blank { .. } => None,
        })
        .collect()
}

pub fn join_with(tokens: &[Option<String>], fills: &[&str], rest: &str) -> String {
    let mut i = 0;
    tokens
        .iter()
        .map(|t| match t {
            Some(w) => w.clone(),
            None => {
                i += 1;
                fills.get(i - 1).map_or(rest.to_string(), |f| f.to_string())
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random story input for the story beam: a template of 2 or 3 sentences
/// (some possibly blank-free) and up to 4 scored transformations per
/// sentence with blanks.
pub struct StoryInstance {
    pub template: StoryTemplate,
    pub options: Vec<Option<Vec<Transformation>>>,
    pub fixed: Vec<String>,
}

pub fn random_story(rng: &mut ChaCha8Rng) -> StoryInstance {
    let sentences = rng.gen_range(2..=3);
    let with_blanks = rng.gen_range(0..sentences);
    let mut lines = Vec::new();
    let mut plan = Vec::new();
    for s in 0..sentences {
        let blanks = if s == with_blanks || rng.gen_bool(0.7) { rng.gen_range(1..=2) } else { 0 };
        let mut line = vec![FILLER.choose(rng).unwrap().to_string()];
        for _ in 0..blanks {
            line.push("{{noun}}".into());
            line.push(FILLER.choose(rng).unwrap().to_string());
        }
        lines.push(line.join(" "));
        plan.push(blanks);
    }
    let template = parse_template("story", &format!("# Story\n{}", lines.join("\n"))).unwrap();
    let mut options = Vec::new();
    let mut fixed = Vec::new();
    for (s, &blanks) in plan.iter().enumerate() {
        let tokens = sentence_tokens(&template, s);
        if blanks == 0 {
            options.push(None);
            fixed.push(join_with(&tokens, &[], ""));
            continue;
        }
        fixed.push(String::new());
        let ordinals: Vec<usize> = template.sentences[s].blanks().map(|(o, _)| o).collect();
        let mut seen = std::collections::BTreeSet::new();
        let mut list = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let words: Vec<&str> = (0..blanks).map(|_| *LEGAL.choose(rng).unwrap()).collect();
            if !seen.insert(words.clone()) {
                continue;
            }
            let fills: BTreeMap<usize, String> =
                ordinals.iter().zip(&words).map(|(o, w)| (*o, w.to_string())).collect();
            let fill_logprobs = ordinals.iter().map(|o| (*o, -0.5 * f64::from(rng.gen_range(1..=4)))).collect();
            list.push(Transformation {
                masked_text: join_with(&tokens, &[], "[MASK]"),
                filled_text: join_with(&tokens, &words, ""),
                fills,
                p_funny: Some(f64::from(rng.gen_range(0..=8)) / 8.0),
                fill_logprobs,
            });
        }
        options.push(Some(list));
    }
    StoryInstance { template, options, fixed }
}

/// Every complete fill of a one-sentence template, enumerated from the
/// mock LM conditioned on the words to the left, as
/// `(words, p_funny, summed log-prob)` sorted by p_funny desc, log-prob
/// desc, then words.
pub fn brute_force_sentence(
    template: &StoryTemplate,
    mask: &MockMask,
    humor: &MockHumor,
    k: usize,
) -> Vec<(Vec<String>, f64, f64)> {
    let tokens = sentence_tokens(template, 0);
    let blanks = tokens.iter().filter(|t| t.is_none()).count();
    let masked = join_with(&tokens, &[], "[MASK]");
    let mut complete = Vec::new();
    let mut stack: Vec<(Vec<String>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((words, lp)) = stack.pop() {
        if words.len() == blanks {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let filled = join_with(&tokens, &refs, "");
            let p = humor.humor_probability(&masked, &filled, Locale::Neutral).unwrap().p_funny;
            complete.push((words, p, lp));
            continue;
        }
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let query = join_with(&tokens, &refs, "[MASK]");
        for c in mask.mask_distribution(&query, 0, k, Locale::Neutral).unwrap() {
            if LEGAL.contains(&c.word.as_str()) {
                let mut next = words.clone();
                next.push(c.word);
                stack.push((next, lp + c.log_probability));
            }
        }
    }
    complete.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(&b.0)));
    complete
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Every combination of one transformation per sentence, as
/// `(fill words, funniness, coherence)` in the final ranking order.
pub fn brute_force_story(inst: &StoryInstance, embed: &MockEmbed) -> Vec<(Vec<String>, f64, f64)> {
    let mut combos: Vec<Vec<&Transformation>> = vec![Vec::new()];
    for opts in inst.options.iter().flatten() {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                opts.iter().map(move |t| {
                    let mut next = c.clone();
                    next.push(t);
                    next
                })
            })
            .collect();
    }
    let mut out: Vec<(Vec<String>, f64, f64)> = combos
        .into_iter()
        .map(|picks| {
            let funniness = picks.iter().map(|t| t.p_funny.unwrap()).sum::<f64>() / picks.len() as f64;
            let words: Vec<String> = picks.iter().flat_map(|t| t.fills.values().cloned()).collect();
            let vectors: Vec<Vec<f64>> = words.iter().map(|w| embed.word(w)).collect();
            let mut sum = 0.0;
            let mut pairs = 0;
            for i in 0..vectors.len() {
                for j in i + 1..vectors.len() {
                    sum += cosine(&vectors[i], &vectors[j]);
                    pairs += 1;
                }
            }
            let coherence = if pairs == 0 { 1.0 } else { sum / f64::from(pairs) };
            (words, funniness, coherence)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn story_options(inst: &StoryInstance) -> Vec<funlib_core::story_compose::SentenceOptions> {
    use funlib_core::story_compose::SentenceOptions;
    inst.options
        .iter()
        .zip(&inst.fixed)
        .map(|(o, f)| match o {
            Some(list) => SentenceOptions::Ranked(list.clone()),
            None => SentenceOptions::Fixed(f.clone()),
        })
        .collect()
}

pub fn bundle(seed: u64) -> funlib_core::ScorerBundle {
    funlib_core::ScorerBundle {
        mask: std::sync::Arc::new(MockMask { seed }),
        humor: std::sync::Arc::new(MockHumor { seed }),
        embed: std::sync::Arc::new(MockEmbed { seed }),
        locale: Locale::Neutral,
    }
}

/// Runs the sentence beam against the brute-force enumeration on
/// `instances` random templates; returns the number of mismatches.
pub fn sentence_mismatches(instances: u64) -> usize {
    use funlib_core::sentence_fill::{fill_sentence_beam, FillParams};
    let lex = lexicon();
    let mut bad = 0;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_sentence(&mut rng, 3);
        let b = bundle(seed);
        let expected = brute_force_sentence(&t, &MockMask { seed }, &MockHumor { seed }, 100);
        let n = expected.len().max(1);
        let got = fill_sentence_beam(&t.sentences[0], &b, &lex, &FillParams::new(n.max(100), n).unwrap()).unwrap();
        let got: Vec<(Vec<String>, f64, f64)> =
            got.iter().map(|x| (x.fills.values().cloned().collect(), x.p_funny.unwrap(), x.summed_logprob())).collect();
        if got != expected {
            bad += 1;
        }
    }
    bad
}

/// Runs the story beam with `N` at least the combination count against
/// exhaustive enumeration; returns the number of mismatches.
pub fn story_mismatches(instances: u64) -> usize {
    use funlib_core::story_compose::{compose_story, ComposeParams};
    let mut bad = 0;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let inst = random_story(&mut rng);
        let embed = MockEmbed { seed };
        let expected = brute_force_story(&inst, &embed);
        let params = ComposeParams { beam_width: expected.len(), ..ComposeParams::default() };
        let got = compose_story(&inst.template, &story_options(&inst), &embed, Locale::Neutral, &params).unwrap();
        let same = got.len() == expected.len()
            && got.iter().zip(&expected).all(|(g, (words, f, c))| {
                g.fills().into_values().collect::<Vec<_>>() == *words
                    && (g.story_funniness - f).abs() < 1e-12
                    && (g.avg_word_coherence - c).abs() < 1e-12
            });
        if !same {
            bad += 1;
        }
    }
    bad
}

/// Top-1 p_funny of the sentence beam at each width in `widths`, for one
/// random instance with up to `max_blanks` blanks.
pub fn top1_by_width(seed: u64, max_blanks: usize, widths: &[usize]) -> Vec<f64> {
    use funlib_core::sentence_fill::{fill_sentence_beam, FillParams};
    let lex = lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
    let t = random_sentence(&mut rng, max_blanks);
    let b = bundle(seed);
    widths
        .iter()
        .map(|&n| {
            let out = fill_sentence_beam(&t.sentences[0], &b, &lex, &FillParams::new(100, n).unwrap()).unwrap();
            out[0].p_funny.unwrap()
        })
        .collect()
}

/// Instances among `instances` where top-1 p_funny drops as the beam widens
/// through 1, 2, 4, 8, 16.
pub fn monotonicity_violations(instances: u64, max_blanks: usize) -> Vec<(u64, Vec<f64>)> {
    (0..instances)
        .map(|seed| (seed, top1_by_width(seed, max_blanks, &[1, 2, 4, 8, 16])))
        .filter(|(_, tops)| tops.windows(2).any(|w| w[1] < w[0]))
        .collect()
}

/// Alpha in its pairwise form with the interval metric: observed
/// disagreement over ordered within-unit pairs weighted by 1/(m_u - 1),
/// expected over all ordered pairs of pairable values.
pub fn pairwise_interval_alpha(units: &[Vec<Option<u8>>]) -> f64 {
    let pairable: Vec<Vec<f64>> = units
        .iter()
        .map(|u| u.iter().flatten().map(|&v| f64::from(v)).collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let all: Vec<f64> = pairable.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mut d_o = 0.0;
    for u in &pairable {
        let mut s = 0.0;
        for (i, a) in u.iter().enumerate() {
            for (j, b) in u.iter().enumerate() {
                if i != j {
                    s += (a - b).powi(2);
                }
            }
        }
        d_o += s / (u.len() - 1) as f64;
    }
    d_o /= n;
    let mut d_e = 0.0;
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate() {
            if i != j {
                d_e += (a - b).powi(2);
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return 1.0;
    }
    1.0 - d_o / d_e
}

/// Pearson r straight from its definition: covariance over the product of
/// standard deviations, each with the 1/n convention.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sx * sy)
}
