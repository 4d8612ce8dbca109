//! Parsing of raw generated text back into structured values.
//!
//! Parsers are total: malformed pieces are dropped and described in
//! `diagnostics`, never returned as errors. A missing instance then scores as
//! a false negative downstream. Instance order follows emission order, which
//! also serves as the confidence ranking for mAP.

use serde::Serialize;

use crate::codec::{
    self, decode_box, decode_mask, BoxTokens, Detection, LocToken, MaskTokens, RenderInstance,
    SegToken, SegmentationInstance, SEG_TOKENS,
};
use crate::model::{BBox, BinaryMask, DiagnosisLabel, ImageInfo};
use crate::task::TaskKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Index of the `;`-separated segment, when the problem is local to one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Parsed<T> {
    pub fn is_canonical(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedDetection {
    pub instance: Detection,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSegmentation {
    pub instance: SegmentationInstance,
    pub bbox: BBox,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Diagnosis(Option<DiagnosisLabel>),
    Detections(Vec<ParsedDetection>),
    Segments(Vec<ParsedSegmentation>),
    Report(String),
    Answer(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedOutput {
    pub task: TaskKind,
    pub payload: Payload,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, PartialEq, Eq)]
enum Token {
    Loc(LocToken),
    Seg(SegToken),
}

fn diag(segment: Option<usize>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        segment,
        message: message.into(),
    }
}

/// Read `<loc####>` / `<seg###>` tokens from the front of `s`, allowing
/// whitespace between them. Returns the tokens and the remaining text.
fn scan_tokens(s: &str) -> Result<(Vec<Token>, &str), String> {
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let rest = &bytes[i..];
        let (digits, is_loc) = if rest.starts_with(b"<loc") {
            (4, true)
        } else if rest.starts_with(b"<seg") {
            (3, false)
        } else {
            return Ok((tokens, &s[i..]));
        };
        let body = &rest[4..];
        let well_formed = body.len() > digits
            && body[..digits].iter().all(u8::is_ascii_digit)
            && body[digits] == b'>';
        let kind = if is_loc { "location" } else { "segmentation" };
        if !well_formed {
            return Err(format!("malformed {kind} token at byte {i}"));
        }
        let index: u16 = body[..digits]
            .iter()
            .fold(0, |acc, d| acc * 10 + u16::from(d - b'0'));
        let token = if is_loc {
            LocToken::new(index).map(Token::Loc)
        } else {
            SegToken::new(index).map(Token::Seg)
        };
        tokens.push(token.map_err(|e| e.to_string())?);
        i += 4 + digits + 1;
    }
}

fn take_label(rest: &str) -> Result<String, String> {
    let label = rest.split_whitespace().collect::<Vec<_>>().join(" ");
    if label.is_empty() {
        return Err("missing label".into());
    }
    if label.contains(['<', '>']) {
        return Err(format!("unexpected token text in label {label:?}"));
    }
    Ok(label)
}

struct RawInstance {
    loc: BoxTokens,
    seg: Option<[SegToken; SEG_TOKENS]>,
    label: String,
}

fn parse_instance(segment: &str, want_seg: bool) -> Result<RawInstance, String> {
    let (tokens, rest) = scan_tokens(segment)?;
    let locs: Vec<LocToken> = tokens
        .iter()
        .take_while(|t| matches!(t, Token::Loc(_)))
        .map(|t| match t {
            Token::Loc(l) => *l,
            Token::Seg(_) => unreachable!(),
        })
        .collect();
    if locs.len() != 4 {
        return Err(format!("expected 4 location tokens, found {}", locs.len()));
    }
    let segs: Vec<SegToken> = tokens[4..]
        .iter()
        .map(|t| match t {
            Token::Seg(s) => Ok(*s),
            Token::Loc(_) => Err("location token after box".to_string()),
        })
        .collect::<Result<_, _>>()?;
    let expected = if want_seg { SEG_TOKENS } else { 0 };
    if segs.len() != expected {
        return Err(format!(
            "expected {expected} segmentation tokens, found {}",
            segs.len()
        ));
    }
    let label = take_label(rest)?;
    Ok(RawInstance {
        loc: BoxTokens([locs[0], locs[1], locs[2], locs[3]]),
        seg: want_seg.then(|| {
            let mut arr = [segs[0]; SEG_TOKENS];
            arr.copy_from_slice(&segs);
            arr
        }),
        label,
    })
}

fn parse_instances<T, F>(raw: &str, want_seg: bool, mut finish: F) -> Parsed<T>
where
    T: HasInstance,
    F: FnMut(RawInstance) -> Result<T, String>,
{
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    if raw.trim().is_empty() {
        diagnostics.push(diag(None, "empty output"));
        return Parsed { items, diagnostics };
    }
    for (idx, segment) in raw.split(';').enumerate() {
        if segment.trim().is_empty() {
            diagnostics.push(diag(Some(idx), "empty segment"));
            continue;
        }
        match parse_instance(segment, want_seg).and_then(&mut finish) {
            Ok(item) => items.push(item),
            Err(msg) => diagnostics.push(diag(Some(idx), msg)),
        }
    }
    if diagnostics.is_empty() {
        let rendered =
            codec::render_suffix(&items.iter().map(HasInstance::instance).collect::<Vec<_>>());
        if rendered.as_deref().ok() != Some(raw) {
            diagnostics.push(diag(None, "non-canonical formatting"));
        }
    }
    Parsed { items, diagnostics }
}

trait HasInstance {
    type Instance: RenderInstance + Clone;
    fn instance(&self) -> Self::Instance;
}

impl HasInstance for ParsedDetection {
    type Instance = Detection;
    fn instance(&self) -> Detection {
        self.instance.clone()
    }
}

impl HasInstance for ParsedSegmentation {
    type Instance = SegmentationInstance;
    fn instance(&self) -> SegmentationInstance {
        self.instance.clone()
    }
}

/// Parse `<loc>x4 label` instances separated by `;`.
pub fn parse_detection(raw: &str, image: &ImageInfo) -> Parsed<ParsedDetection> {
    parse_instances(raw, false, |r| {
        let bbox = decode_box(&r.loc, image).map_err(|e| e.to_string())?;
        Ok(ParsedDetection {
            instance: Detection {
                loc: r.loc,
                label: r.label,
            },
            bbox,
        })
    })
}

/// Parse `<loc>x4 <seg>x16 label` instances separated by `;`.
pub fn parse_segmentation(raw: &str, image: &ImageInfo) -> Parsed<ParsedSegmentation> {
    parse_instances(raw, true, |r| {
        let tokens = MaskTokens {
            loc: r.loc,
            seg: r.seg.expect("segmentation tokens present"),
        };
        let (bbox, mask) = decode_mask(&tokens, image).map_err(|e| e.to_string())?;
        if mask.is_empty() {
            return Err("decoded mask is empty".into());
        }
        Ok(ParsedSegmentation {
            instance: SegmentationInstance {
                tokens,
                label: r.label,
            },
            bbox,
            mask,
        })
    })
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Canonical form of a short answer for exact-match scoring.
///
/// Lowercases, collapses whitespace, strips trailing `.`/`,` and maps the
/// number words zero..ten to digits. Repeated trailing punctuation is stripped
/// completely so the function is idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut s: &str = &lowered;
    loop {
        let t = s.trim_end();
        let t = t
            .strip_suffix('.')
            .or_else(|| t.strip_suffix(','))
            .unwrap_or(t);
        if t.len() == s.len() {
            break;
        }
        s = t;
    }
    s.split_whitespace()
        .map(|w| match NUMBER_WORDS.iter().position(|n| *n == w) {
            Some(i) => i.to_string(),
            None => w.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse any task's output into a [`ParsedOutput`].
pub fn parse_output(task: TaskKind, raw: &str, image: &ImageInfo) -> ParsedOutput {
    let (payload, diagnostics) = match task {
        TaskKind::Detection => {
            let p = parse_detection(raw, image);
            (Payload::Detections(p.items), p.diagnostics)
        }
        TaskKind::Segmentation => {
            let p = parse_segmentation(raw, image);
            (Payload::Segments(p.items), p.diagnostics)
        }
        TaskKind::Diagnosis => {
            let label = raw.trim().parse::<DiagnosisLabel>().ok();
            let mut d = Vec::new();
            if label.is_none() {
                d.push(diag(None, format!("unknown diagnosis {:?}", raw.trim())));
            } else if raw.trim() != raw {
                d.push(diag(None, "non-canonical formatting"));
            }
            (Payload::Diagnosis(label), d)
        }
        TaskKind::Report => {
            let text = raw.trim().to_string();
            let d = if text != raw {
                vec![diag(None, "non-canonical formatting")]
            } else {
                vec![]
            };
            (Payload::Report(text), d)
        }
        TaskKind::Vqa => {
            let text = normalize_answer(raw);
            let d = if text != raw {
                vec![diag(None, "non-canonical formatting")]
            } else {
                vec![]
            };
            (Payload::Answer(text), d)
        }
    };
    ParsedOutput {
        task,
        payload,
        diagnostics,
    }
}
