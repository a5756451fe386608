//! Word-level vocabulary, input/target sequence assembly with image slots,
//! and the trajectory line grammar.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use crate::annotation::{
    format_number, format_trajectory, serialize_stages, template_corpus, EgoContext, ReasoningRecord, Stage,
};
use crate::error::{Error, Result};
use crate::frontend::{ContextEmbedding, GridTag, ProjectedFeatures};
use crate::geometry::Vec2;
use crate::scene::types::NavCommand;
use crate::tensor::Mat;

pub type TokenId = u32;

pub const SPECIALS: [&str; 7] = ["<image>", "[BOS]", "[EOS]", "[BOI]", "[EOI]", "[BOT]", "[EOT]"];
pub const IMAGE: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const BOI: TokenId = 3;
pub const EOI: TokenId = 4;
pub const BOT: TokenId = 5;
pub const EOT: TokenId = 6;
pub const UNK: TokenId = 7;
pub const CTX: TokenId = 8;
pub const NEWLINE: TokenId = 9;

const RESERVED: [&str; 3] = ["<unk>", "<ctx>", "<nl>"];
const PUNCT: [char; 6] = ['.', '-', '(', ')', ',', ':'];

const PROMPT: &str =
    "Describe the scene, the traffic signs, the critical objects and the meta action, then plan the trajectory.";

fn is_word_char(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '/'
}

/// Splits text into vocabulary pieces: words, single digits, single
/// punctuation marks, and `<nl>` for line breaks.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if c == '\n' {
            out.push("<nl>".to_string());
        } else if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn is_digit(p: &str) -> bool {
    p.len() == 1 && p.as_bytes()[0].is_ascii_digit()
}

fn needs_space(prev: &str, p: &str) -> bool {
    if matches!(p, "," | ")" | ":" | ".") || prev == "(" {
        return false;
    }
    !(is_digit(p) && (is_digit(prev) || prev == "." || prev == "-"))
}

/// Inverse of [`tokenize`] for serializer output.
pub fn detokenize<S: AsRef<str>>(pieces: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for p in pieces {
        let p = p.as_ref();
        if p == "<nl>" {
            out.push('\n');
            prev = None;
            continue;
        }
        if let Some(q) = prev {
            if needs_space(q, p) {
                out.push(' ');
            }
        }
        out.push_str(p);
        prev = Some(p);
    }
    out
}

/// Words of the fixed input template that are not in the annotation corpus.
pub fn input_template_text() -> String {
    let mut s = format!("User: velocity m/s, acceleration m/s/s, command. {PROMPT} Assistant:");
    for c in NavCommand::ALL {
        s.push(' ');
        s.push_str(c.word());
    }
    for t in GridTag::all() {
        s.push(' ');
        s.push_str(t.tag());
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Specials, reserved tokens, digits and punctuation first, then every
    /// word of `corpus` in sorted order.
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut words: Vec<String> = SPECIALS.iter().chain(RESERVED.iter()).map(|s| s.to_string()).collect();
        words.extend((0..10).map(|d| d.to_string()));
        words.extend(PUNCT.iter().map(|c| c.to_string()));
        let fixed: BTreeSet<String> = words.iter().cloned().collect();
        let mut rest = BTreeSet::new();
        for text in corpus {
            for p in tokenize(text.as_ref()) {
                if !fixed.contains(&p) {
                    rest.insert(p);
                }
            }
        }
        words.extend(rest);
        Self::from_words(words).expect("fresh vocabulary is consistent")
    }

    /// The vocabulary covering every serializer and input-template word.
    pub fn standard() -> Self {
        let mut corpus = template_corpus();
        corpus.push(input_template_text());
        Self::build(&corpus)
    }

    fn from_words(words: Vec<String>) -> Result<Self> {
        for (i, s) in SPECIALS.iter().chain(RESERVED.iter()).enumerate() {
            if words.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Format { what: "vocabulary", message: format!("id {i} must be {s}") });
            }
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.contains(['\t', '\n']) {
                return Err(Error::Format { what: "vocabulary", message: format!("bad word at id {i}") });
            }
            if index.insert(w.clone(), i as TokenId).is_some() {
                return Err(Error::Format { what: "vocabulary", message: format!("duplicate word {w}") });
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> &str {
        self.words.get(id as usize).map_or("<unk>", String::as_str)
    }

    /// Maps text to ids; strict mode rejects unknown words instead of using
    /// `<unk>`.
    pub fn encode(&self, text: &str, strict: bool) -> Result<Vec<TokenId>> {
        tokenize(text)
            .into_iter()
            .map(|p| match self.id(&p) {
                Some(i) => Ok(i),
                None if strict => Err(Error::OutOfVocab(p)),
                None => Ok(UNK),
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let pieces: Vec<&str> = ids.iter().map(|&i| self.word(i)).collect();
        detokenize(&pieces)
    }

    /// `word<TAB>id` per line, in id order.
    pub fn to_text(&self) -> String {
        self.words.iter().enumerate().map(|(i, w)| format!("{w}\t{i}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = || Error::Format { what: "vocabulary", message: format!("line {}", n + 1) };
            let (w, id) = line.split_once('\t').ok_or_else(bad)?;
            let id: usize = id.trim().parse().map_err(|_| bad())?;
            if id != words.len() {
                return Err(bad());
            }
            words.push(w.to_string());
        }
        Self::from_words(words)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotTime {
    Current,
    Future,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSlot {
    pub start: usize,
    pub len: usize,
    pub grid: usize,
    pub tag: GridTag,
    pub time: SlotTime,
}

impl ImageSlot {
    pub fn span(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub text_loss_mask: Vec<bool>,
    pub image_slots: Vec<ImageSlot>,
    pub context_pos: Option<usize>,
    /// Positions of the front-view rows among the future slots.
    pub front_future_span: Vec<Range<usize>>,
    /// Embeddings substituted for the token embedding at a position.
    pub overrides: BTreeMap<usize, Vec<f64>>,
    /// Projected future-frame tokens, one row per future slot position in
    /// sequence order.
    pub target_latents: Option<Mat>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn push(&mut self, id: TokenId, loss: bool) {
        self.ids.push(id);
        self.text_loss_mask.push(loss);
    }

    fn push_all(&mut self, ids: &[TokenId], loss: bool) {
        for &i in ids {
            self.push(i, loss);
        }
    }

    /// Positions of future slots in sequence order.
    pub fn future_positions(&self) -> Vec<usize> {
        self.image_slots.iter().filter(|s| s.time == SlotTime::Future).flat_map(|s| s.span()).collect()
    }

    pub fn is_image_position(&self, p: usize) -> bool {
        self.image_slots.iter().any(|s| s.span().contains(&p))
    }

    /// `self` followed by `other`, with all positions of `other` shifted.
    pub fn concat(&self, other: &TokenSequence) -> TokenSequence {
        let off = self.len();
        let mut out = self.clone();
        out.ids.extend_from_slice(&other.ids);
        out.text_loss_mask.extend_from_slice(&other.text_loss_mask);
        out.image_slots.extend(other.image_slots.iter().map(|s| ImageSlot { start: s.start + off, ..s.clone() }));
        if out.context_pos.is_none() {
            out.context_pos = other.context_pos.map(|p| p + off);
        }
        out.front_future_span.extend(other.front_future_span.iter().map(|r| r.start + off..r.end + off));
        out.overrides.extend(other.overrides.iter().map(|(&p, v)| (p + off, v.clone())));
        if other.target_latents.is_some() {
            out.target_latents = other.target_latents.clone();
        }
        out
    }
}

/// Slot counts of a frame set and the prompt template in use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLayout {
    pub l_v: usize,
    pub grids: Vec<GridTag>,
    pub prompt_id: u32,
}

impl SequenceLayout {
    /// Six views and four front quadrants.
    pub fn standard(l_v: usize) -> Self {
        Self { l_v, grids: GridTag::all(), prompt_id: 0 }
    }

    pub fn slots(&self) -> usize {
        self.grids.len() * self.l_v
    }

    fn check(&self, pf: &ProjectedFeatures) -> Result<()> {
        if pf.tags != self.grids || pf.l_v != self.l_v {
            return Err(Error::ShapeMismatch(format!(
                "projected features have {} grids of {} tokens, layout expects {} of {}",
                pf.grid_count(),
                pf.l_v,
                self.grids.len(),
                self.l_v
            )));
        }
        Ok(())
    }
}

fn user_prefix(speed: f64, accel: f64, cmd: NavCommand) -> String {
    format!(
        "User: velocity {} m/s, acceleration {} m/s/s, command {}.",
        format_number(speed),
        format_number(accel),
        cmd.word()
    )
}

/// User turn: context slot, ego state text, tagged image slots, prompt.
pub fn assemble_input(
    rec: &ReasoningRecord,
    projected: &ProjectedFeatures,
    ctx: &ContextEmbedding,
    layout: &SequenceLayout,
    vocab: &Vocab,
) -> Result<TokenSequence> {
    assemble_input_from(&rec.context, projected, ctx, layout, vocab)
}

/// [`assemble_input`] from the ego context alone, as used when driving.
pub fn assemble_input_from(
    c: &EgoContext,
    projected: &ProjectedFeatures,
    ctx: &ContextEmbedding,
    layout: &SequenceLayout,
    vocab: &Vocab,
) -> Result<TokenSequence> {
    layout.check(projected)?;
    let mut seq = TokenSequence::default();
    seq.context_pos = Some(0);
    seq.push(CTX, false);
    seq.overrides.insert(0, ctx.0.clone());
    seq.push_all(&vocab.encode(&user_prefix(c.speed, c.accel, c.command), true)?, false);
    let dp = projected.tokens.cols;
    for (g, tag) in layout.grids.iter().enumerate() {
        seq.push(vocab.id(tag.tag()).ok_or_else(|| Error::OutOfVocab(tag.tag().into()))?, false);
        let start = seq.len();
        for j in 0..layout.l_v {
            seq.push(IMAGE, false);
            let row = g * layout.l_v + j;
            seq.overrides.insert(start + j, projected.tokens.data[row * dp..(row + 1) * dp].to_vec());
        }
        seq.image_slots.push(ImageSlot { start, len: layout.l_v, grid: g, tag: *tag, time: SlotTime::Current });
    }
    seq.push_all(&vocab.encode(PROMPT, true)?, false);
    seq.push_all(&vocab.encode("Assistant:", true)?, false);
    Ok(seq)
}

/// `[BOS] [BOI]` future slots `[EOI]`; shared by training targets and
/// generation.
fn image_span(seq: &mut TokenSequence, layout: &SequenceLayout, future: Option<&ProjectedFeatures>) -> Result<()> {
    if let Some(f) = future {
        layout.check(f)?;
    }
    seq.push(BOS, false);
    seq.push(BOI, false);
    for (g, tag) in layout.grids.iter().enumerate() {
        let start = seq.len();
        for j in 0..layout.l_v {
            seq.push(IMAGE, false);
            if let Some(f) = future {
                let dp = f.tokens.cols;
                let row = g * layout.l_v + j;
                seq.overrides.insert(start + j, f.tokens.data[row * dp..(row + 1) * dp].to_vec());
            }
        }
        seq.image_slots.push(ImageSlot { start, len: layout.l_v, grid: g, tag: *tag, time: SlotTime::Future });
        if tag.is_front() {
            let r = start..start + layout.l_v;
            match seq.front_future_span.last_mut() {
                Some(last) if last.end == r.start => last.end = r.end,
                _ => seq.front_future_span.push(r),
            }
        }
    }
    seq.push(EOI, false);
    if let Some(f) = future {
        seq.target_latents = Some(f.tokens.clone());
    }
    Ok(())
}

/// Target with an explicit set of reasoning stages and optional trajectory.
pub fn assemble_target_with(
    rec: &ReasoningRecord,
    stages: &[Stage],
    trajectory: bool,
    layout: &SequenceLayout,
    future: Option<&ProjectedFeatures>,
    vocab: &Vocab,
    strict: bool,
) -> Result<TokenSequence> {
    let mut seq = TokenSequence::default();
    image_span(&mut seq, layout, future)?;
    seq.push(BOT, true);
    seq.push_all(&vocab.encode(&serialize_stages(rec, stages), strict)?, true);
    seq.push(EOT, true);
    if trajectory {
        seq.push_all(&vocab.encode(&format_trajectory(&rec.expert_waypoints), strict)?, true);
    }
    seq.push(EOS, true);
    Ok(seq)
}

/// Assistant turn: future image span, the record's reasoning blocks and the
/// trajectory line.
pub fn assemble_target(
    rec: &ReasoningRecord,
    layout: &SequenceLayout,
    future: Option<&ProjectedFeatures>,
    vocab: &Vocab,
    strict: bool,
) -> Result<TokenSequence> {
    assemble_target_with(rec, &rec.stages, true, layout, future, vocab, strict)
}

/// Perception-only target used in the alignment stage.
pub fn stage1_targets(
    rec: &ReasoningRecord,
    layout: &SequenceLayout,
    future: Option<&ProjectedFeatures>,
    vocab: &Vocab,
) -> Result<TokenSequence> {
    assemble_target_with(rec, &[Stage::SceneUnderstanding, Stage::TrafficSigns], false, layout, future, vocab, false)
}

/// Generation prefix: the input followed by the forced `[BOS] [BOI]` and the
/// future slots, without latents.
pub fn generation_prefix(input: &TokenSequence, layout: &SequenceLayout) -> Result<TokenSequence> {
    let mut tail = TokenSequence::default();
    image_span(&mut tail, layout, None)?;
    Ok(input.concat(&tail))
}

/// Spans of a target that satisfies the grammar
/// `[BOS] [BOI] <image>* [EOI] [BOT] text [EOT] text [EOS]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetParts {
    pub image: Range<usize>,
    pub reasoning: Range<usize>,
    pub trajectory: Range<usize>,
}

pub fn parse_target(ids: &[TokenId], slots: usize) -> Result<TargetParts> {
    let bad = |position: usize, message: &str| Error::Parse { position, message: message.to_string() };
    let expect = |p: usize, id: TokenId, name: &str| {
        if ids.get(p) == Some(&id) {
            Ok(())
        } else {
            Err(bad(p, &format!("expected {name}")))
        }
    };
    expect(0, BOS, "[BOS]")?;
    expect(1, BOI, "[BOI]")?;
    let image = 2..2 + slots;
    for p in image.clone() {
        expect(p, IMAGE, "<image>")?;
    }
    expect(image.end, EOI, "[EOI]")?;
    expect(image.end + 1, BOT, "[BOT]")?;
    let text_start = image.end + 2;
    let is_special = |id: TokenId| (id as usize) < SPECIALS.len();
    let mut p = text_start;
    while p < ids.len() && !is_special(ids[p]) {
        p += 1;
    }
    let reasoning = text_start..p;
    expect(p, EOT, "[EOT]")?;
    let traj_start = p + 1;
    p = traj_start;
    while p < ids.len() && !is_special(ids[p]) {
        p += 1;
    }
    let trajectory = traj_start..p;
    expect(p, EOS, "[EOS]")?;
    if p + 1 != ids.len() {
        return Err(bad(p + 1, "trailing tokens after [EOS]"));
    }
    Ok(TargetParts { image, reasoning, trajectory })
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Parse { position: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        if self.s.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = |c: &mut Self| {
            let d0 = c.pos;
            while c.pos < c.s.len() && c.s[c.pos].is_ascii_digit() {
                c.pos += 1;
            }
            c.pos > d0
        };
        if !digits(self) {
            return Err(self.err("expected digits"));
        }
        if self.s.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            if !digits(self) {
                return Err(self.err("expected digits after decimal point"));
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).map_err(|_| self.err("invalid utf-8"))?;
        text.parse().map_err(|_| self.err("invalid number"))
    }
}

/// Parses `Trajectory: (x, y), (x, y), (x, y), (x, y)`.
pub fn parse_trajectory(text: &str) -> Result<[Vec2; 4]> {
    let mut c = Cursor { s: text.as_bytes(), pos: 0 };
    c.skip_ws();
    let key = b"Trajectory";
    if !c.s[c.pos..].starts_with(key) {
        return Err(c.err("expected `Trajectory`"));
    }
    c.pos += key.len();
    c.eat(b':')?;
    let mut pts = Vec::new();
    loop {
        c.eat(b'(')?;
        let x = c.number()?;
        c.eat(b',')?;
        let y = c.number()?;
        c.eat(b')')?;
        pts.push(Vec2::new(x, y));
        match c.peek() {
            Some(b',') => c.pos += 1,
            None => break,
            Some(_) => return Err(c.err("expected `,` or end of input")),
        }
    }
    let found = pts.len();
    pts.try_into().map_err(|_| Error::Arity { expected: 4, found })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_are_reserved() {
        let v = Vocab::standard();
        for (i, s) in SPECIALS.iter().enumerate() {
            assert_eq!(v.id(s), Some(i as TokenId));
        }
        assert_eq!(v.word(UNK), "<unk>");
        assert_eq!(v.word(CTX), "<ctx>");
        assert_eq!(v.word(NEWLINE), "<nl>");
    }

    #[test]
    fn round_trips_numbers_and_punctuation() {
        let text = "Trajectory: (0.00, -1.25), (10.50, 3.00)\nA: lane 0, at 7.00 m/s.";
        let pieces = tokenize(text);
        assert!(pieces.contains(&"m/s".to_string()));
        assert_eq!(detokenize(&pieces), text);
    }

    #[test]
    fn unknown_words() {
        let v = Vocab::standard();
        assert_eq!(v.encode("zebra", false).unwrap(), vec![UNK]);
        assert!(matches!(v.encode("zebra", true), Err(Error::OutOfVocab(_))));
    }

    #[test]
    fn vocab_text_round_trip() {
        let v = Vocab::standard();
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("a\t0\n").is_err());
    }

    #[test]
    fn trajectory_grammar() {
        let p = parse_trajectory("Trajectory: (0.00, 0.00), (1.00, 0.00), (2.00, 0.00), (3.00, 0.00)").unwrap();
        assert_eq!(p[3], Vec2::new(3.0, 0.0));
        assert!(matches!(parse_trajectory("Trajectory: (1,2)"), Err(Error::Arity { expected: 4, found: 1 })));
        assert!(matches!(parse_trajectory("Trajectory: (1,)"), Err(Error::Parse { position: 15, .. })));
        assert!(matches!(parse_trajectory("Path: (1, 2)"), Err(Error::Parse { position: 0, .. })));
    }
}
