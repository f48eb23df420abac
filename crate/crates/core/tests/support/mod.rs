//! Independent reference implementations used as test oracles. Nothing here
//! calls into the algorithms under test: captions and lexicons are re-parsed
//! from raw text, rules are re-implemented over plain strings, and graph
//! properties are recomputed by brute force.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use denograph::graph::DenotationGraph;
use denograph::model::MatchModel;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

// ---------------------------------------------------------------------------
// phrase abstraction

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tok {
    pub lemma: String,
    pub pos: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chunk {
    /// "NP", "VP", "PP" or "O"
    pub kind: String,
    pub toks: Vec<Tok>,
}

pub type Expr = Vec<Chunk>;

const PUNCT: &[&str] = &[".", ",", ":", "``", "''", "-LRB-", "-RRB-", "$", "#"];

fn is_det(p: &str) -> bool {
    p == "DT" || p == "PDT"
}
fn is_mod(p: &str) -> bool {
    matches!(p, "JJ" | "JJR" | "JJS" | "RB" | "RBR" | "RBS")
}
fn is_noun(p: &str) -> bool {
    matches!(p, "NN" | "NNS" | "NNP" | "NNPS")
}
fn is_verb(p: &str) -> bool {
    matches!(p, "VB" | "VBD" | "VBG" | "VBN" | "VBP" | "VBZ")
}

/// `(image_id, chunks)` per caption line, punctuation removed.
pub fn parse_caption_text(text: &str) -> Vec<(String, Expr)> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let mut chunks: Expr = Vec::new();
        for t in fields[2].split(' ') {
            let sub: Vec<&str> = t.split('|').collect();
            let (lemma, pos, tag) = (sub[1].to_lowercase(), sub[2].to_string(), sub[3]);
            let starts_new = !tag.starts_with("I-");
            let kind = if tag == "O" { "O".to_string() } else { tag[2..].to_string() };
            if starts_new {
                chunks.push(Chunk { kind, toks: Vec::new() });
            }
            if !PUNCT.contains(&pos.as_str()) {
                chunks.last_mut().unwrap().toks.push(Tok { lemma, pos });
            }
        }
        chunks.retain(|c| !c.toks.is_empty());
        out.push((fields[0].to_string(), chunks));
    }
    out
}

pub fn norm(e: &Expr) -> String {
    e.iter()
        .flat_map(|c| c.toks.iter().map(|t| t.lemma.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn n_tokens(e: &Expr) -> usize {
    e.iter().map(|c| c.toks.len()).sum()
}

pub type Lexicon = HashMap<Vec<String>, Vec<String>>;

pub fn parse_lexicon_text(text: &str) -> Lexicon {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            let words = |s: &str| s.split_whitespace().map(|w| w.to_lowercase()).collect::<Vec<_>>();
            (words(k), words(v))
        })
        .collect()
}

fn r1(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    for i in 0..e.len() {
        if e[i].kind != "NP" {
            continue;
        }
        let kept: Vec<Tok> = e[i].toks.iter().filter(|t| !is_det(&t.pos)).cloned().collect();
        if !kept.is_empty() && kept.len() != e[i].toks.len() {
            let mut x = e.clone();
            x[i].toks = kept;
            out.push(x);
        }
    }
    out
}

fn r2(e: &Expr, lex: &Lexicon) -> Vec<Expr> {
    // flatten with (chunk, offset) coordinates
    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (ci, c) in e.iter().enumerate() {
        for k in 0..c.toks.len() {
            flat.push((ci, k));
        }
    }
    let lemma = |i: usize| e[flat[i].0].toks[flat[i].1].lemma.clone();
    let longest = lex.keys().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    let mut p = 0;
    while p < flat.len() {
        let mut matched = 0;
        for len in (1..=longest.min(flat.len() - p)).rev() {
            let key: Vec<String> = (p..p + len).map(lemma).collect();
            let Some(hyp) = lex.get(&key) else { continue };
            let (sc, so) = flat[p];
            let (ec, eo) = flat[p + len - 1];
            let ok = e[sc].kind == "NP"
                && e[ec].kind == "NP"
                && eo + 1 == e[ec].toks.len()
                && is_noun(&e[ec].toks[eo].pos);
            if !ok {
                continue;
            }
            let mut np: Vec<Tok> = e[sc].toks[..so].iter().filter(|t| !is_det(&t.pos)).cloned().collect();
            np.extend(hyp.iter().map(|w| Tok { lemma: w.clone(), pos: "NN".into() }));
            let mut x: Expr = e[..sc].to_vec();
            x.push(Chunk { kind: "NP".into(), toks: np });
            x.extend(e[ec + 1..].iter().cloned());
            out.push(x);
            matched = len;
            break;
        }
        p += matched.max(1);
    }
    out
}

fn r3(e: &Expr) -> Vec<Expr> {
    let n = e.len();
    let kinds: Vec<&str> = e.iter().map(|c| c.kind.as_str()).collect();
    let keep = if n >= 2 && kinds[n - 1] == "PP" {
        n - 1
    } else if n >= 3 && kinds[n - 1] == "NP" && kinds[n - 2] == "PP" {
        n - 2
    } else {
        return Vec::new();
    };
    vec![e[..keep].to_vec()]
}

fn r4(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    for i in 0..e.len() {
        let toks = &e[i].toks;
        if e[i].kind != "NP" || toks.len() < 2 {
            continue;
        }
        let last = toks.len() - 1;
        let kept: Vec<Tok> = toks
            .iter()
            .enumerate()
            .filter(|(k, t)| *k == last || !is_mod(&t.pos))
            .map(|(_, t)| t.clone())
            .collect();
        if kept.len() != toks.len() {
            let mut x = e.clone();
            x[i].toks = kept;
            out.push(x);
        }
    }
    out
}

fn r5(e: &Expr) -> Vec<Expr> {
    if e.len() < 2 {
        return Vec::new();
    }
    (0..e.len())
        .filter(|&i| e[i].kind == "NP" && (i == 0 || e[i - 1].kind != "PP"))
        .map(|i| vec![e[i].clone()])
        .collect()
}

fn r6(e: &Expr) -> Vec<Expr> {
    let Some(v) = e.iter().position(|c| c.kind == "VP") else { return Vec::new() };
    if v == 0 || v + 1 >= e.len() {
        return Vec::new();
    }
    let Some(h) = e[v].toks.iter().rposition(|t| is_verb(&t.pos)) else { return Vec::new() };
    let mut x: Expr = e[..v].to_vec();
    x.push(Chunk { kind: "VP".into(), toks: e[v].toks[..=h].to_vec() });
    vec![x]
}

/// Outputs of rule `r` (1-based) applied once.
pub fn apply(r: u8, e: &Expr, lex: &Lexicon) -> Vec<Expr> {
    match r {
        1 => r1(e),
        2 => r2(e, lex),
        3 => r3(e),
        4 => r4(e),
        5 => r5(e),
        6 => r6(e),
        _ => unreachable!(),
    }
}

/// Brute-force closure: every distinct chunk structure reachable within
/// `max_levels` rule applications. Returns norm -> min level and
/// (parent norm, child norm) -> min rule number.
pub fn closure(
    sentence: &Expr,
    lex: &Lexicon,
    rules: &[u8],
    max_levels: u32,
) -> (BTreeMap<String, u32>, BTreeMap<(String, String), u8>) {
    let mut level: HashMap<Expr, u32> = HashMap::new();
    level.insert(sentence.clone(), 0);
    let mut queue = VecDeque::from([sentence.clone()]);
    let mut derivs: BTreeMap<(String, String), u8> = BTreeMap::new();
    while let Some(e) = queue.pop_front() {
        let l = level[&e];
        if l == max_levels {
            continue;
        }
        for &r in rules {
            for g in apply(r, &e, lex) {
                if norm(&g) == norm(&e) {
                    continue;
                }
                let slot = derivs.entry((norm(&g), norm(&e))).or_insert(r);
                *slot = (*slot).min(r);
                if !level.contains_key(&g) {
                    level.insert(g.clone(), l + 1);
                    queue.push_back(g);
                }
            }
        }
    }
    let mut norms: BTreeMap<String, u32> = BTreeMap::new();
    for (e, l) in level {
        let slot = norms.entry(norm(&e)).or_insert(l);
        *slot = (*slot).min(l);
    }
    (norms, derivs)
}

// ---------------------------------------------------------------------------
// graph construction

#[derive(Debug, PartialEq, Eq)]
pub struct OracleGraph {
    /// norm -> (level, images)
    pub nodes: BTreeMap<String, (u32, BTreeSet<String>)>,
    /// (parent norm, child norm) -> rule number
    pub edges: BTreeMap<(String, String), u8>,
}

pub fn reachable(edges: &BTreeSet<(String, String)>, from: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from.to_string()];
    while let Some(v) = stack.pop() {
        for (p, c) in edges {
            if *p == v && seen.insert(c.clone()) {
                stack.push(c.clone());
            }
        }
    }
    seen
}

/// Naive dictionary merge of per-sentence closures, brute-force transitive
/// reduction and image sets by fixpoint iteration.
pub fn build_graph(captions: &str, lexicon: &str, rules: &[u8], max_levels: u32, reduce: bool) -> OracleGraph {
    let lex = parse_lexicon_text(lexicon);
    let mut sentences: BTreeMap<String, (Expr, BTreeSet<String>)> = BTreeMap::new();
    for (img, e) in parse_caption_text(captions) {
        sentences.entry(norm(&e)).or_insert_with(|| (e, BTreeSet::new())).1.insert(img);
    }
    let mut levels: BTreeMap<String, u32> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String), u8> = BTreeMap::new();
    for (e, _) in sentences.values() {
        let (ns, ds) = closure(e, &lex, rules, max_levels);
        for (n, l) in ns {
            let slot = levels.entry(n).or_insert(l);
            *slot = (*slot).min(l);
        }
        for (k, r) in ds {
            let slot = edges.entry(k).or_insert(r);
            *slot = (*slot).min(r);
        }
    }
    if reduce {
        let keys: BTreeSet<(String, String)> = edges.keys().cloned().collect();
        let redundant: Vec<(String, String)> = keys
            .iter()
            .filter(|(a, c)| {
                keys.iter()
                    .any(|(a2, b)| a2 == a && b != c && reachable(&keys, b).contains(c))
            })
            .cloned()
            .collect();
        for e in redundant {
            edges.remove(&e);
        }
    }
    let mut images: BTreeMap<String, BTreeSet<String>> =
        levels.keys().map(|n| (n.clone(), BTreeSet::new())).collect();
    for (n, (_, imgs)) in &sentences {
        images.get_mut(n).unwrap().extend(imgs.iter().cloned());
    }
    loop {
        let mut changed = false;
        for (p, c) in edges.keys() {
            let add: Vec<String> = images[c].difference(&images[p]).cloned().collect();
            if !add.is_empty() {
                images.get_mut(p).unwrap().extend(add);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    OracleGraph {
        nodes: levels.into_iter().map(|(n, l)| { let i = images[&n].clone(); (n, (l, i)) }).collect(),
        edges,
    }
}

/// The same view of a built graph, for comparison.
pub fn view(g: &DenotationGraph) -> OracleGraph {
    let rule_no = |r: denograph::RuleId| r.as_str()[1..].parse::<u8>().unwrap();
    OracleGraph {
        nodes: g
            .nodes()
            .iter()
            .map(|n| {
                let imgs = g.node_image_ids(n.id).map(str::to_string).collect();
                (n.norm().to_string(), (n.level(), imgs))
            })
            .collect(),
        edges: g
            .edges()
            .map(|(p, c, r)| ((g.nodes()[p].norm().to_string(), g.nodes()[c].norm().to_string()), rule_no(r)))
            .collect(),
    }
}

/// Every node sharing a parent with `id`, by scanning all node pairs.
pub fn siblings_by_scan(g: &DenotationGraph, id: usize) -> BTreeSet<usize> {
    let parents_of = |n: usize| -> BTreeSet<usize> {
        g.edges().filter(|&(_, c, _)| c == n).map(|(p, _, _)| p).collect()
    };
    let mine = parents_of(id);
    (0..g.len())
        .filter(|&j| j != id && !parents_of(j).is_disjoint(&mine))
        .collect()
}

pub fn ancestors_by_scan(g: &DenotationGraph, id: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut frontier = vec![id];
    while let Some(v) = frontier.pop() {
        for (p, c, _) in g.edges() {
            if c == v && seen.insert(p) {
                frontier.push(p);
            }
        }
    }
    seen
}

/// Structural graph invariants; returns a description of every violation.
pub fn graph_violations(g: &DenotationGraph) -> Vec<String> {
    let mut v = Vec::new();
    let edges: BTreeSet<(usize, usize)> = g.edges().map(|(p, c, _)| (p, c)).collect();
    // acyclicity by repeated removal of sources
    let mut alive: BTreeSet<usize> = (0..g.len()).collect();
    loop {
        let source = alive
            .iter()
            .copied()
            .find(|&n| !edges.iter().any(|&(p, c)| c == n && alive.contains(&p)));
        match source {
            Some(s) => {
                alive.remove(&s);
            }
            None => break,
        }
    }
    if !alive.is_empty() {
        v.push(format!("cycle among {:?}", alive));
    }
    let imgs = |n: usize| -> BTreeSet<&str> { g.node_image_ids(n).collect() };
    for &(p, c) in &edges {
        if !imgs(c).is_subset(&imgs(p)) {
            v.push(format!("edge {}->{} child images not a subset", p, c));
        }
    }
    let mut norms = BTreeSet::new();
    for n in g.nodes() {
        if !norms.insert(n.norm()) {
            v.push(format!("duplicate norm {}", n.norm()));
        }
        if n.images.is_empty() {
            v.push(format!("node {} has no images", n.id));
        }
        let children: Vec<usize> = edges.iter().filter(|e| e.0 == n.id).map(|e| e.1).collect();
        if n.is_leaf != children.is_empty() {
            v.push(format!("node {} leaf flag wrong", n.id));
        }
        if children.is_empty() {
            continue;
        }
        let mut union: BTreeSet<&str> = children.iter().flat_map(|&c| imgs(c)).collect();
        if !n.is_caption() && union != imgs(n.id) {
            v.push(format!("node {} images differ from union of children", n.id));
        }
        union.extend(n.own_images.iter().map(|&i| g.image_id(i)));
        if union != imgs(n.id) {
            v.push(format!("node {} images differ from own plus children", n.id));
        }
    }
    v
}

// ---------------------------------------------------------------------------
// similarity and scoring

/// k nearest neighbours by cosine from an all-pairs scan.
pub fn knn_by_scan(vectors: &[(String, Vec<f64>)], k: usize) -> BTreeMap<String, Vec<String>> {
    let mut out = BTreeMap::new();
    for (qi, (q, qv)) in vectors.iter().enumerate() {
        let mut scored: Vec<(f64, &String)> = Vec::new();
        for (ci, (c, cv)) in vectors.iter().enumerate() {
            if ci == qi {
                continue;
            }
            let mut dot = 0.0;
            let mut qq = 0.0;
            let mut cc = 0.0;
            for i in 0..qv.len() {
                dot += qv[i] * cv[i];
                qq += qv[i] * qv[i];
                cc += cv[i] * cv[i];
            }
            scored.push((dot / (qq * cc).sqrt(), c));
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        out.insert(q.clone(), scored.into_iter().take(k).map(|(_, c)| c.clone()).collect());
    }
    out
}

/// `theta . ((x W + b) * mean word rows)` with explicit loops.
pub fn scalar_score(model: &MatchModel, x: &[f64], tokens: &[usize]) -> f64 {
    let p = &model.params;
    let h = p.dims.h;
    let mut s = 0.0;
    for t in 0..h {
        let mut phi = p.img_bias[t];
        for i in 0..x.len() {
            phi += x[i] * p.img_proj[i * h + t];
        }
        let mut psi = 0.0;
        for &w in tokens {
            psi += p.word_table[w * h + t];
        }
        psi /= tokens.len() as f64;
        s += p.theta[t] * phi * psi;
    }
    s
}

/// 1-based rank of `key` among scored keys: one plus the number of keys
/// scoring higher, or equal with a smaller key.
pub fn rank_of(scores: &[(String, f64)], key: &str) -> usize {
    let mine = scores.iter().find(|(k, _)| k == key).unwrap().1;
    1 + scores
        .iter()
        .filter(|(k, s)| *s > mine || (*s == mine && k.as_str() < key))
        .count()
}

/// R@1, R@5, R@10 by direct counting.
pub fn recall_recount(queries: &[(Vec<(String, f64)>, BTreeSet<String>)]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (slot, k) in out.iter_mut().zip([1usize, 5, 10]) {
        let hits = queries
            .iter()
            .filter(|(scores, rel)| {
                let k = k.min(scores.len());
                rel.iter().any(|r| rank_of(scores, r) <= k)
            })
            .count();
        *slot = hits as f64 / queries.len() as f64;
    }
    out
}

pub fn ap_recount(scores: &[(String, f64)], relevant: &BTreeSet<String>) -> f64 {
    let mut ranks: Vec<usize> = relevant.iter().map(|r| rank_of(scores, r)).collect();
    // summing best rank first keeps the float result order-stable
    ranks.sort_unstable();
    let mut total = 0.0;
    for &r in &ranks {
        let above = ranks.iter().filter(|&&o| o <= r).count();
        total += above as f64 / r as f64;
    }
    total / ranks.len() as f64
}

// ---------------------------------------------------------------------------
// gradients

/// Central differences of `f` on every coordinate of every parameter block,
/// compared against `analytic`. Returns the worst relative error and the
/// coordinate it occurred at.
pub fn check_gradients(
    model: &MatchModel,
    analytic: &denograph::model::Params,
    f: impl Fn(&MatchModel) -> f64,
) -> (f64, String) {
    const EPS: f64 = 1e-5;
    let mut probe = model.clone();
    let mut worst = (0.0, String::new());
    for b in 0..8 {
        let n = model.params.blocks()[b].len();
        for i in 0..n {
            let orig = model.params.blocks()[b][i];
            probe.params.blocks_mut()[b][i] = orig + EPS;
            let up = f(&probe);
            probe.params.blocks_mut()[b][i] = orig - EPS;
            let down = f(&probe);
            probe.params.blocks_mut()[b][i] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let a = analytic.blocks()[b][i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-8);
            if rel > worst.0 {
                worst = (rel, format!("{}[{}] analytic {} numeric {}", denograph::model::BLOCK_NAMES[b], i, a, numeric));
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// negative sampling

/// Legal candidates per kind, recomputed by scanning every node and image.
pub fn legal_counts(
    g: &DenotationGraph,
    knn: &BTreeMap<String, Vec<String>>,
    node: usize,
    image: &str,
) -> [usize; 4] {
    let imgs = |n: usize| -> BTreeSet<&str> { g.node_image_ids(n).collect() };
    let anc = ancestors_by_scan(g, node);
    let sibs = siblings_by_scan(g, node);
    let near: BTreeSet<&str> = knn[image].iter().map(String::as_str).collect();
    let vis = g.image_ids().iter().filter(|i| !imgs(node).contains(i.as_str())).count();
    let sem = (0..g.len())
        .filter(|&j| j != node && !anc.contains(&j) && !imgs(j).contains(image))
        .count();
    let hard = (0..g.len())
        .filter(|&j| {
            g.children(j).is_empty()
                && j != node
                && !anc.contains(&j)
                && !imgs(j).contains(image)
                && !imgs(j).is_disjoint(&near)
        })
        .count();
    let dg = sibs.iter().filter(|&&j| !imgs(j).contains(image)).count();
    [vis, sem, hard, dg]
}

/// Every way `batch` breaks the negative-sampling contract.
pub fn sampler_violations(
    g: &DenotationGraph,
    knn: &BTreeMap<String, Vec<String>>,
    batch: &denograph::sampler::TrainingBatch,
    requested: [usize; 4],
) -> Vec<String> {
    use denograph::NegativeKind::*;
    let mut v = Vec::new();
    let i = batch.positive_node;
    let x = batch.positive_image.as_str();
    let imgs = |n: usize| -> BTreeSet<&str> { g.node_image_ids(n).collect() };
    if !imgs(i).contains(x) {
        v.push("positive image not in positive node".to_string());
    }
    let anc = ancestors_by_scan(g, i);
    let sibs = siblings_by_scan(g, i);
    let near: BTreeSet<&str> = knn[x].iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    for n in &batch.negatives {
        if !seen.insert((n.kind, n.node, n.image.clone())) {
            v.push(format!("duplicate {:?} negative", n.kind));
        }
        let ok = match n.kind {
            VisMismatch => n.node == i && !imgs(i).contains(n.image.as_str()),
            SemMismatch => n.image == x && n.node != i && !anc.contains(&n.node) && !imgs(n.node).contains(x),
            SemHard => {
                n.image == x
                    && g.children(n.node).is_empty()
                    && n.node != i
                    && !anc.contains(&n.node)
                    && !imgs(n.node).contains(x)
                    && !imgs(n.node).is_disjoint(&near)
            }
            DgHard => n.image == x && sibs.contains(&n.node) && !imgs(n.node).contains(x),
        };
        if !ok {
            let what = if anc.contains(&n.node) && n.kind != VisMismatch { "ancestor leak" } else { "illegal" };
            v.push(format!("{} {:?} negative node {} image {}", what, n.kind, n.node, n.image));
        }
    }
    let legal = legal_counts(g, knn, i, x);
    for (k, kind) in denograph::NegativeKind::ALL.iter().enumerate() {
        let got = batch.of_kind(*kind).count();
        let want = requested[k].min(legal[k]);
        if got != want {
            v.push(format!("{:?}: delivered {} expected {}", kind, got, want));
        }
        if batch.shortfall.0[k] != requested[k] - got {
            v.push(format!("{:?}: shortfall misreported", kind));
        }
    }
    v
}

// ---------------------------------------------------------------------------
// random loss instances

pub struct LossCase {
    pub model: MatchModel,
    pub batch: Vec<denograph::model::MatchInstance>,
    pub spec: Vec<denograph::model::SpecTerm>,
    pub edges: Vec<denograph::model::EdgePair>,
}

/// A small random model with a random batch of every loss input. Spec terms
/// use disjoint parent and child words, and terms whose margin lies within
/// `1e-3` of the hinge are dropped so that finite differences never straddle
/// the kink.
pub fn random_case(seed: u64) -> LossCase {
    use denograph::model::{EdgePair, MatchInstance, Pair, SpecTerm, Vocab};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (h, d, m) = (rng.gen_range(2..6), rng.gen_range(1..5), rng.gen_range(1..5));
    let vocab = Vocab::new(["a", "b", "c", "d", "e"]);
    let n_words = vocab.len();
    let mut model = MatchModel::new(vocab, h, d, m, seed).unwrap();
    for b in model.params.blocks_mut() {
        for w in b.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    let image = |rng: &mut rand_chacha::ChaCha8Rng| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let tokens = |rng: &mut rand_chacha::ChaCha8Rng| {
        let n = rng.gen_range(1..4);
        (0..n).map(|_| rng.gen_range(0..n_words)).collect::<Vec<usize>>()
    };
    let pair = |rng: &mut rand_chacha::ChaCha8Rng| Pair { image: image(rng), tokens: tokens(rng) };
    let batch = (0..rng.gen_range(1..4))
        .map(|_| MatchInstance {
            positive: pair(&mut rng),
            negatives: (0..rng.gen_range(1..5)).map(|_| pair(&mut rng)).collect(),
        })
        .collect();
    let mut spec = Vec::new();
    for _ in 0..rng.gen_range(2..6) {
        let p = pair(&mut rng);
        // disjoint texts: a word shared at equal weight has an exactly zero
        // gradient that central differences only resolve to ~1e-11
        let child: Vec<usize> = tokens(&mut rng).into_iter().filter(|w| !p.tokens.contains(w)).collect();
        if child.is_empty() {
            continue;
        }
        let t = SpecTerm { image: p.image, parent: p.tokens, child };
        let margin = scalar_score(&model, &t.image, &t.parent) - scalar_score(&model, &t.image, &t.child);
        if margin.abs() > 1e-3 {
            spec.push(t);
        }
    }
    let edges = (0..rng.gen_range(1..5))
        .map(|_| EdgePair { parent: pair(&mut rng), child: pair(&mut rng), is_edge: rng.gen_bool(0.5) })
        .collect();
    LossCase { model, batch, spec, edges }
}

// ---------------------------------------------------------------------------
// retrieval fixtures

pub struct MetricCase {
    pub model: MatchModel,
    pub features: denograph::FeatureStore,
    pub pool: Vec<String>,
    /// `(tokens, relevant images)`
    pub queries: Vec<(Vec<usize>, BTreeSet<String>)>,
}

/// Twenty random text queries over a pool of 12 to 25 images. A third of the
/// images duplicate another image's vector so that score ties occur.
pub fn metric_case(seed: u64) -> MetricCase {
    use denograph::model::Vocab;
    use denograph::ImageFeature;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let model = MatchModel::new(Vocab::new(["a", "b", "c", "d", "e", "f"]), 4, d, 2, seed).unwrap();
    let n = rng.gen_range(12..=25);
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    for i in 0..n {
        let v = if i > 0 && rng.gen_bool(0.33) {
            vectors[rng.gen_range(0..i)].clone()
        } else {
            (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
        };
        vectors.push(v);
    }
    let pool: Vec<String> = (0..n).map(|i| format!("im{:02}", i)).collect();
    let entries = pool
        .iter()
        .zip(vectors)
        .map(|(id, vector)| ImageFeature { image_id: id.clone(), vector, regions: Vec::new() })
        .collect();
    let features = denograph::FeatureStore::new(d, entries).unwrap();
    let queries = (0..20)
        .map(|_| {
            let tokens = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..7)).collect();
            let k = rng.gen_range(1..=4);
            let relevant = pool.choose_multiple(&mut rng, k).cloned().collect();
            (tokens, relevant)
        })
        .collect();
    MetricCase { model, features, pool, queries }
}

/// Scores of every pool image for `tokens`, from the explicit-loop scorer.
pub fn scan_scores(c: &MetricCase, tokens: &[usize]) -> Vec<(String, f64)> {
    c.pool
        .iter()
        .map(|id| {
            let x: Vec<f64> = c.features.get(id).unwrap().vector.iter().map(|&v| v as f64).collect();
            (id.clone(), scalar_score(&c.model, &x, tokens))
        })
        .collect()
}
