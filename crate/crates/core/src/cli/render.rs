//! Terminal and HTML rendering of tagged MT output. BAD words are shown in
//! red; a BAD gap shows up as a red underscore between its neighbours.

use crate::tags::Tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RenderFormat {
    Ansi,
    Html,
}

const RED: &str = "\x1b[31m";
const RESET: &str = "\x1b[0m";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sentence {sentence}: {what} has {found} entries, expected {expected}")]
pub struct RenderError {
    pub sentence: usize,
    pub what: &'static str,
    pub expected: usize,
    pub found: usize,
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn mark(text: &str, bad: bool, format: RenderFormat, class: &str) -> String {
    match (format, bad) {
        (RenderFormat::Ansi, false) => text.to_string(),
        (RenderFormat::Ansi, true) => format!("{RED}{text}{RESET}"),
        (RenderFormat::Html, false) => escape_html(text),
        (RenderFormat::Html, true) => format!("<span class=\"{class}\">{}</span>", escape_html(text)),
    }
}

/// One rendered line for a sentence. `gaps`, when given, has one tag more
/// than `words`.
pub fn render_sentence(
    words: &[String],
    tags: &[Tag],
    gaps: Option<&[Tag]>,
    format: RenderFormat,
    index: usize,
) -> Result<String, RenderError> {
    if tags.len() != words.len() {
        return Err(RenderError {
            sentence: index + 1,
            what: "mt tags",
            expected: words.len(),
            found: tags.len(),
        });
    }
    if let Some(g) = gaps {
        if g.len() != words.len() + 1 {
            return Err(RenderError {
                sentence: index + 1,
                what: "gap tags",
                expected: words.len() + 1,
                found: g.len(),
            });
        }
    }
    let gap_bad = |i: usize| gaps.is_some_and(|g| g[i] == Tag::Bad);
    let mut parts = Vec::with_capacity(2 * words.len() + 1);
    for (i, (w, t)) in words.iter().zip(tags).enumerate() {
        if gap_bad(i) {
            parts.push(mark("_", true, format, "bad-gap"));
        }
        parts.push(mark(w, *t == Tag::Bad, format, "bad"));
    }
    if gap_bad(words.len()) {
        parts.push(mark("_", true, format, "bad-gap"));
    }
    Ok(parts.join(" "))
}

/// Renders every sentence, one per line.
pub fn render(
    sentences: &[Vec<String>],
    mt_tags: &[Vec<Tag>],
    gap_tags: Option<&[Vec<Tag>]>,
    format: RenderFormat,
) -> Result<String, RenderError> {
    if mt_tags.len() != sentences.len() {
        return Err(RenderError {
            sentence: 0,
            what: "mt tag lines",
            expected: sentences.len(),
            found: mt_tags.len(),
        });
    }
    if let Some(g) = gap_tags {
        if g.len() != sentences.len() {
            return Err(RenderError {
                sentence: 0,
                what: "gap tag lines",
                expected: sentences.len(),
                found: g.len(),
            });
        }
    }
    let mut out = String::new();
    for (i, (words, tags)) in sentences.iter().zip(mt_tags).enumerate() {
        let gaps = gap_tags.map(|g| g[i].as_slice());
        out.push_str(&render_sentence(words, tags, gaps, format, i)?);
        out.push('\n');
    }
    Ok(out)
}
