use super::Tag;
use crate::corpus::{token_offsets, AnnotatedRecord, Entity, Span};

/// Whitespace tokens of a text with their byte ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokens<'a> {
    pub words: Vec<&'a str>,
    pub offsets: Vec<(usize, usize)>,
}

pub fn tokenize(text: &str) -> Tokens<'_> {
    let offsets = token_offsets(text);
    let words = offsets.iter().map(|&(s, e)| &text[s..e]).collect();
    Tokens { words, offsets }
}

/// A span over token indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
    pub entity: Entity,
}

/// Maps byte spans to token spans. A span whose edges fall inside a token is
/// widened to cover it, with a warning.
pub fn token_spans(record: &AnnotatedRecord, offsets: &[(usize, usize)]) -> Vec<TokenSpan> {
    let mut out = Vec::with_capacity(record.spans.len());
    for span in &record.spans {
        let covered: Vec<usize> = offsets
            .iter()
            .enumerate()
            .filter(|(_, &(s, e))| s < span.end && e > span.start)
            .map(|(i, _)| i)
            .collect();
        let (Some(&first), Some(&last)) = (covered.first(), covered.last()) else {
            log::warn!(
                "span {}..{} of {:?} covers no token; dropped",
                span.start,
                span.end,
                record.record.instruction
            );
            continue;
        };
        if offsets[first].0 != span.start || offsets[last].1 != span.end {
            log::warn!(
                "span {}..{} of {:?} snapped outward to token boundaries {}..{}",
                span.start,
                span.end,
                record.record.instruction,
                offsets[first].0,
                offsets[last].1
            );
        }
        let snapped = TokenSpan {
            start: first,
            end: last + 1,
            entity: span.entity,
        };
        // Snapping can make neighbours collide; keep the earlier one.
        if out.last().is_some_and(|prev: &TokenSpan| prev.end > snapped.start) {
            continue;
        }
        out.push(snapped);
    }
    out
}

pub fn spans_to_tags(spans: &[TokenSpan], len: usize) -> Vec<Tag> {
    let mut tags = vec![Tag::O; len];
    for span in spans {
        tags[span.start] = Tag::begin(span.entity);
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = Tag::inside(span.entity);
        }
    }
    tags
}

/// Reads entity spans off a BIO-valid tag sequence.
pub fn tags_to_spans(tags: &[Tag]) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut open: Option<TokenSpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match (tag.entity(), tag.is_inside(), open.as_mut()) {
            (Some(e), true, Some(span)) if span.entity == e => span.end = i + 1,
            (Some(e), _, _) => {
                spans.extend(open.take());
                open = Some(TokenSpan {
                    start: i,
                    end: i + 1,
                    entity: e,
                });
            }
            (None, _, _) => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    spans
}

/// Converts token spans back to byte spans.
pub fn byte_spans(spans: &[TokenSpan], offsets: &[(usize, usize)]) -> Vec<Span> {
    spans
        .iter()
        .map(|s| Span {
            start: offsets[s.start].0,
            end: offsets[s.end - 1].1,
            entity: s.entity,
        })
        .collect()
}
