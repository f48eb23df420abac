//! Seeded synthetic corpora: tagged captions, a hypernym lexicon and image
//! features generated together, for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{parse_captions, parse_lexicon, CaptionRecord, FeatureStore, HypernymLexicon, ImageFeature};
use crate::error::Result;

/// Words are `surface/lemma/POS`; each chunk is `(label, words)` with label
/// `NP`, `VP` or `PP`.
pub type Chunk<'a> = (&'a str, Vec<&'a str>);

/// Render chunks as a tagged token sequence in caption-file form.
pub fn tag_chunks(chunks: &[Chunk<'_>]) -> String {
    let mut out = Vec::new();
    for (label, words) in chunks {
        for (i, w) in words.iter().enumerate() {
            let mut parts = w.split('/');
            let (s, l, p) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
            let bio = if i == 0 { "B" } else { "I" };
            out.push(format!("{}|{}|{}|{}-{}", s, l, p, bio, label));
        }
    }
    out.join(" ")
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub captions: Vec<CaptionRecord>,
    pub lexicon: HypernymLexicon,
    pub lexicon_text: String,
    pub features: FeatureStore,
}

impl SynthCorpus {
    pub fn captions_text(&self) -> String {
        let mut out = String::new();
        for c in &self.captions {
            out.push_str(&c.to_line());
            out.push('\n');
        }
        out
    }

    fn assemble(lines: Vec<String>, lexicon_text: &str, features: FeatureStore) -> Result<Self> {
        Ok(SynthCorpus {
            captions: parse_captions(&lines.join("\n"))?,
            lexicon: parse_lexicon(lexicon_text)?,
            lexicon_text: lexicon_text.to_string(),
            features,
        })
    }
}

fn noisy(center: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    center
        .iter()
        .map(|c| (c + rng.gen_range(-noise..=noise)) as f32)
        .collect()
}

fn one_hot(d: usize, hot: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for &i in hot {
        v[i] = 1.0;
    }
    v
}

/// Eight images in two visual clusters of four. Every image of a cluster
/// carries the same two captions, which name the cluster's animal.
pub fn separable(seed: u64) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let captions: [[Vec<Chunk>; 2]; 2] = [
        [
            vec![
                ("NP", vec!["a/a/DT", "dog/dog/NN"]),
                ("VP", vec!["runs/run/VBZ"]),
                ("PP", vec!["on/on/IN"]),
                ("NP", vec!["the/the/DT", "grass/grass/NN"]),
            ],
            vec![("NP", vec!["a/a/DT", "brown/brown/JJ", "dog/dog/NN"]), ("VP", vec!["plays/play/VBZ"])],
        ],
        [
            vec![
                ("NP", vec!["a/a/DT", "cat/cat/NN"]),
                ("VP", vec!["sleeps/sleep/VBZ"]),
                ("PP", vec!["on/on/IN"]),
                ("NP", vec!["a/a/DT", "sofa/sofa/NN"]),
            ],
            vec![("NP", vec!["a/a/DT", "white/white/JJ", "cat/cat/NN"]), ("VP", vec!["sits/sit/VBZ"])],
        ],
    ];
    let d = 8;
    let mut lines = Vec::new();
    let mut feats = Vec::new();
    for (c, name) in ["dog", "cat"].iter().enumerate() {
        let center = one_hot(d, &[2 * c, 2 * c + 1]);
        for k in 0..4 {
            let id = format!("{}{}", name, k);
            for (s, cap) in captions[c].iter().enumerate() {
                lines.push(format!("{}\ts{}\t{}", id, s, tag_chunks(cap)));
            }
            feats.push(ImageFeature {
                image_id: id,
                vector: noisy(&center, 0.1, &mut rng),
                regions: Vec::new(),
            });
        }
    }
    SynthCorpus::assemble(lines, "dog\tanimal\ncat\tanimal\n", FeatureStore::new(d, feats)?)
}

/// Thirty-six images over every combination of three animals, three colours
/// and two places, two images each, captioned `a <colour> <animal> sits on the <place>`. The
/// resulting graph has four abstraction levels and many sibling leaves that
/// differ in a single attribute. Features are one-hot attribute blocks plus
/// uniform noise of amplitude `noise`.
pub fn attribute_ladder(seed: u64, noise: f64) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let animals = ["dog", "cat", "horse"];
    let colours = ["black", "white", "brown"];
    let places = ["grass", "sofa"];
    let d = 8;
    let mut lines = Vec::new();
    let mut feats = Vec::new();
    for (a, animal) in animals.iter().enumerate() {
        for (c, colour) in colours.iter().enumerate() {
            for (p, place) in places.iter().enumerate() {
                let center = one_hot(d, &[a, 3 + c, 6 + p]);
                let wa = format!("{0}/{0}/NN", animal);
                let wc = format!("{0}/{0}/JJ", colour);
                let wp = format!("{0}/{0}/NN", place);
                let caption = tag_chunks(&[
                    ("NP", vec!["a/a/DT", &wc, &wa]),
                    ("VP", vec!["sits/sit/VBZ"]),
                    ("PP", vec!["on/on/IN"]),
                    ("NP", vec!["the/the/DT", &wp]),
                ]);
                for k in 0..2 {
                    let id = format!("{}_{}_{}_{}", colour, animal, place, k);
                    lines.push(format!("{}\ts0\t{}", id, caption));
                    feats.push(ImageFeature {
                        image_id: id,
                        vector: noisy(&center, noise, &mut rng),
                        regions: Vec::new(),
                    });
                }
            }
        }
    }
    SynthCorpus::assemble(
        lines,
        "dog\tanimal\ncat\tanimal\nhorse\tanimal\ngrass\tplant\nsofa\tfurniture\n",
        FeatureStore::new(d, feats)?,
    )
}

pub const RANDOM_LEXICON: &str = "dog\tanimal\n\
cat\tanimal\n\
horse\tanimal\n\
man\tperson\n\
woman\tperson\n\
boy\tchild\n\
girl\tchild\n\
child\tperson\n\
crowd of people\tcrowd\n\
grass\tplant\n\
bike\tvehicle\n";

const NOUNS: &[&str] = &[
    "dog/dog/NN", "cat/cat/NN", "horse/horse/NN", "man/man/NN", "woman/woman/NN", "boy/boy/NN",
    "girl/girl/NN", "dogs/dog/NNS", "ball/ball/NN", "grass/grass/NN", "street/street/NN",
    "water/water/NN", "bike/bike/NN", "beach/beach/NN",
];
const ADJS: &[&str] = &["black/black/JJ", "white/white/JJ", "young/young/JJ", "small/small/JJ", "red/red/JJ"];
const DETS: &[&str] = &["a/a/DT", "the/the/DT", "two/two/CD"];
const VERBS: &[&str] = &[
    "runs/run/VBZ", "sits/sit/VBZ", "jumps/jump/VBZ", "plays/play/VBZ", "rides/ride/VBZ",
    "walks/walk/VBZ",
];
const PREPS: &[&str] = &["on/on/IN", "in/in/IN", "near/near/IN", "with/with/IN"];

fn random_np<'a>(rng: &mut ChaCha8Rng) -> Vec<Chunk<'a>> {
    if rng.gen_bool(0.1) {
        return vec![
            ("NP", vec!["a/a/DT", "crowd/crowd/NN"]),
            ("PP", vec!["of/of/IN"]),
            ("NP", vec!["people/people/NNS"]),
        ];
    }
    let mut words = Vec::new();
    if rng.gen_bool(0.8) {
        words.push(*DETS.choose(rng).unwrap());
    }
    if rng.gen_bool(0.4) {
        words.push(*ADJS.choose(rng).unwrap());
    }
    words.push(*NOUNS.choose(rng).unwrap());
    vec![("NP", words)]
}

/// A random caption: a noun phrase, usually a verb, and up to two
/// prepositional phrases.
pub fn random_caption(rng: &mut ChaCha8Rng) -> String {
    let mut chunks = random_np(rng);
    if rng.gen_bool(0.85) {
        let mut vp = vec![*VERBS.choose(rng).unwrap()];
        if rng.gen_bool(0.1) {
            vp.insert(0, "is/be/VBZ");
            vp[1] = "running/run/VBG";
        }
        chunks.push(("VP", vp));
    }
    for _ in 0..rng.gen_range(0..=2) {
        chunks.push(("PP", vec![*PREPS.choose(rng).unwrap()]));
        chunks.extend(random_np(rng));
    }
    tag_chunks(&chunks)
}

/// Up to `max_captions` random captions over 2..=12 images with random
/// `dim`-wide features. Captions repeat with some probability so that
/// several images share sentences.
pub fn random_corpus(seed: u64, max_captions: usize, dim: usize) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_images = rng.gen_range(2..=12);
    let n_captions = rng.gen_range(1..=max_captions.max(1));
    let mut pool: Vec<String> = Vec::new();
    let mut lines = Vec::new();
    for s in 0..n_captions {
        let caption = if !pool.is_empty() && rng.gen_bool(0.3) {
            pool.choose(&mut rng).unwrap().clone()
        } else {
            let c = random_caption(&mut rng);
            pool.push(c.clone());
            c
        };
        let image = format!("img{:02}", rng.gen_range(0..n_images));
        lines.push(format!("{}\ts{}\t{}", image, s, caption));
    }
    let feats = (0..n_images)
        .map(|i| ImageFeature {
            image_id: format!("img{:02}", i),
            vector: (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
            regions: Vec::new(),
        })
        .collect();
    SynthCorpus::assemble(lines, RANDOM_LEXICON, FeatureStore::new(dim, feats)?)
}
