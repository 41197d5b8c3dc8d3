//! Textual tree encoding ("stringBT"): parsing, canonical serialization,
//! knowledge-subtree construction and the merge into a control tree.
//!
//! ```text
//! node      := composite | decorator | leaf | slot
//! composite := ("SEL" | "SEQ" | "PAR") label? "[" node* "]"
//! decorator := "DEC:" ident params? label? "[" node "]"
//! leaf      := ("COND:" | "ACT:") ident params? label?
//! slot      := "SLOT:" ident ("[" node* "]")?
//! params    := "(" (param ("," param)*)? ")"
//! label     := "#" [A-Za-z0-9_]+
//! ```
//!
//! Tokens are separated by whitespace; brackets are tokens of their own.
//! The canonical form uses single spaces, `SEL[ a b ]`, `SEL[ ]` for an empty
//! composite, always writes leaf parentheses and writes an empty slot without
//! brackets.

use std::fmt::Write as _;

use thiserror::Error;

use crate::bt::{BtNode, NodeKind};
use crate::knowledge::ConditionSequence;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown node tag `{tag}` at {line}:{column}")]
    UnknownTag {
        line: usize,
        column: usize,
        tag: String,
    },
    #[error("arity error at {line}:{column}: {message}")]
    Arity {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("control tree layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Word(&'a str),
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<(Tok<'_>, Pos)> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut word_start: Option<(usize, Pos)> = None;
    for (i, ch) in text.char_indices() {
        let here = Pos { line, column };
        let breaks = ch.is_whitespace() || ch == '[' || ch == ']';
        if breaks {
            if let Some((start, pos)) = word_start.take() {
                out.push((Tok::Word(&text[start..i]), pos));
            }
            if ch == '[' {
                out.push((Tok::Open, here));
            } else if ch == ']' {
                out.push((Tok::Close, here));
            }
        } else if word_start.is_none() {
            word_start = Some((i, here));
        }
        if ch == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    if let Some((start, pos)) = word_start {
        out.push((Tok::Word(&text[start..]), pos));
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_param(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '+' | '-'))
}

fn is_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

enum Header {
    Composite(NodeKind),
    Decorator(NodeKind),
    Leaf(NodeKind),
    Slot(NodeKind),
}

struct Parser<'a> {
    toks: Vec<(Tok<'a>, Pos)>,
    at: usize,
    end: Pos,
}

impl<'a> Parser<'a> {
    fn syntax(pos: Pos, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&(Tok<'a>, Pos)> {
        self.toks.get(self.at)
    }

    fn next_pos(&self) -> Pos {
        self.peek().map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn expect_open(&mut self) -> Result<(), GrammarError> {
        match self.peek() {
            Some((Tok::Open, _)) => {
                self.at += 1;
                Ok(())
            }
            _ => Err(Self::syntax(self.next_pos(), "expected `[`")),
        }
    }

    /// Parses `ident`, optional `(params)` and optional `#label` from the
    /// remainder of a word.
    fn split_call(
        rest: &str,
        pos: Pos,
    ) -> Result<(String, Vec<String>, Option<String>), GrammarError> {
        let (body, label) = match rest.split_once('#') {
            Some((body, label)) if is_label(label) => (body, Some(label.to_string())),
            Some(_) => return Err(Self::syntax(pos, format!("bad label in `{rest}`"))),
            None => (rest, None),
        };
        let (id, params) = match body.split_once('(') {
            Some((id, tail)) => {
                let inner = tail
                    .strip_suffix(')')
                    .ok_or_else(|| Self::syntax(pos, format!("unclosed parameter list in `{rest}`")))?;
                let params: Vec<String> = if inner.is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(str::to_string).collect()
                };
                if let Some(bad) = params.iter().find(|p| !is_param(p)) {
                    return Err(Self::syntax(pos, format!("bad parameter `{bad}`")));
                }
                (id, params)
            }
            None => (body, Vec::new()),
        };
        if !is_ident(id) {
            return Err(Self::syntax(pos, format!("bad identifier `{id}`")));
        }
        Ok((id.to_string(), params, label))
    }

    fn header(word: &str, pos: Pos) -> Result<(Header, Option<String>), GrammarError> {
        let composite = |kind: NodeKind, rest: &str| -> Result<_, GrammarError> {
            let label = match rest {
                "" => None,
                r => match r.strip_prefix('#') {
                    Some(l) if is_label(l) => Some(l.to_string()),
                    _ => {
                        return Err(GrammarError::UnknownTag {
                            line: pos.line,
                            column: pos.column,
                            tag: word.to_string(),
                        })
                    }
                },
            };
            Ok((Header::Composite(kind), label))
        };
        if let Some(rest) = word.strip_prefix("SEL") {
            if rest.is_empty() || rest.starts_with('#') {
                return composite(NodeKind::Selector, rest);
            }
        }
        if let Some(rest) = word.strip_prefix("SEQ") {
            if rest.is_empty() || rest.starts_with('#') {
                return composite(NodeKind::Sequence, rest);
            }
        }
        if let Some(rest) = word.strip_prefix("PAR") {
            if rest.is_empty() || rest.starts_with('#') {
                return composite(NodeKind::Parallel, rest);
            }
        }
        if let Some(rest) = word.strip_prefix("DEC:") {
            let (policy, params, label) = Self::split_call(rest, pos)?;
            return Ok((Header::Decorator(NodeKind::Decorator { policy, params }), label));
        }
        if let Some(rest) = word.strip_prefix("COND:") {
            let (id, params, label) = Self::split_call(rest, pos)?;
            return Ok((Header::Leaf(NodeKind::Condition { id, params }), label));
        }
        if let Some(rest) = word.strip_prefix("ACT:") {
            let (id, params, label) = Self::split_call(rest, pos)?;
            return Ok((Header::Leaf(NodeKind::Action { id, params }), label));
        }
        if let Some(rest) = word.strip_prefix("SLOT:") {
            if !is_label(rest) {
                return Err(Self::syntax(pos, format!("bad slot name `{rest}`")));
            }
            return Ok((
                Header::Slot(NodeKind::Slot {
                    segment: rest.to_string(),
                }),
                None,
            ));
        }
        Err(GrammarError::UnknownTag {
            line: pos.line,
            column: pos.column,
            tag: word.to_string(),
        })
    }

    fn children(&mut self) -> Result<Vec<BtNode>, GrammarError> {
        let mut children = Vec::new();
        loop {
            match self.peek() {
                Some((Tok::Close, _)) => {
                    self.at += 1;
                    return Ok(children);
                }
                Some(_) => children.push(self.node()?),
                None => return Err(Self::syntax(self.end, "unexpected end of input, expected `]`")),
            }
        }
    }

    fn node(&mut self) -> Result<BtNode, GrammarError> {
        let (word, pos) = match self.peek() {
            Some((Tok::Word(w), p)) => (*w, *p),
            Some((_, p)) => return Err(Self::syntax(*p, "expected a node")),
            None => return Err(Self::syntax(self.end, "unexpected end of input, expected a node")),
        };
        self.at += 1;
        let (header, label) = Self::header(word, pos)?;
        let node = match header {
            Header::Composite(kind) => {
                self.expect_open()?;
                BtNode::new(kind, self.children()?)
            }
            Header::Decorator(kind) => {
                self.expect_open()?;
                let children = self.children()?;
                if children.len() != 1 {
                    return Err(GrammarError::Arity {
                        line: pos.line,
                        column: pos.column,
                        message: format!("decorator needs exactly 1 child, found {}", children.len()),
                    });
                }
                BtNode::new(kind, children)
            }
            Header::Leaf(kind) => {
                if let Some((Tok::Open, _)) = self.peek() {
                    return Err(GrammarError::Arity {
                        line: pos.line,
                        column: pos.column,
                        message: format!("{} node cannot have children", kind.name()),
                    });
                }
                BtNode::new(kind, Vec::new())
            }
            Header::Slot(kind) => {
                let children = if let Some((Tok::Open, _)) = self.peek() {
                    self.at += 1;
                    self.children()?
                } else {
                    Vec::new()
                };
                BtNode::new(kind, children)
            }
        };
        Ok(BtNode { label, ..node })
    }
}

/// Parses stringBT text into a tree.
pub fn parse(text: &str) -> Result<BtNode, GrammarError> {
    let end = {
        let line = text.lines().count().max(1);
        let column = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        Pos { line, column }
    };
    let mut parser = Parser {
        toks: tokenize(text),
        at: 0,
        end,
    };
    let root = parser.node()?;
    if let Some((_, pos)) = parser.peek() {
        return Err(Parser::syntax(*pos, "trailing input after the root node"));
    }
    Ok(root)
}

fn write_call(out: &mut String, tag: &str, id: &str, params: &[String]) {
    let _ = write!(out, "{tag}:{id}({})", params.join(","));
}

fn write_node(out: &mut String, node: &BtNode) {
    let label = |out: &mut String| {
        if let Some(l) = &node.label {
            out.push('#');
            out.push_str(l);
        }
    };
    let children = |out: &mut String| {
        out.push('[');
        for child in &node.children {
            out.push(' ');
            write_node(out, child);
        }
        out.push_str(" ]");
    };
    match &node.kind {
        NodeKind::Selector | NodeKind::Sequence | NodeKind::Parallel => {
            out.push_str(match node.kind {
                NodeKind::Selector => "SEL",
                NodeKind::Sequence => "SEQ",
                _ => "PAR",
            });
            label(out);
            children(out);
        }
        NodeKind::Decorator { policy, params } => {
            out.push_str("DEC:");
            out.push_str(policy);
            if !params.is_empty() {
                let _ = write!(out, "({})", params.join(","));
            }
            label(out);
            children(out);
        }
        NodeKind::Condition { id, params } => {
            write_call(out, "COND", id, params);
            label(out);
        }
        NodeKind::Action { id, params } => {
            write_call(out, "ACT", id, params);
            label(out);
        }
        NodeKind::Slot { segment } => {
            out.push_str("SLOT:");
            out.push_str(segment);
            if !node.children.is_empty() {
                children(out);
            }
        }
    }
}

/// Canonical text form of a tree.
pub fn serialize(tree: &BtNode) -> String {
    let mut out = String::new();
    write_node(&mut out, tree);
    out
}

/// `Sequence(s_q, T_ka*)`: the condition guards in order, then the action
/// subtree. [`ConditionSequence`] is never empty, so the result is always guarded.
pub fn make_knowledge_subtree(sequence: &ConditionSequence, action: BtNode) -> BtNode {
    let mut children: Vec<BtNode> = sequence
        .iter()
        .map(|c| BtNode::new(NodeKind::Condition { id: c.id.clone(), params: c.params.clone() }, vec![]))
        .collect();
    children.push(action);
    BtNode::sequence(children)
}

/// Segment tags under the control selector, in priority order.
pub const SEGMENTS: [&str; 5] = ["C", "CK", "PK", "NK", "F"];

/// The control selector: critical, common-knowledge, prior-knowledge and
/// new-knowledge segments followed by the fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlTree {
    root: BtNode,
    nk_index: usize,
}

impl ControlTree {
    pub fn new(
        critical: Vec<BtNode>,
        common: Vec<BtNode>,
        prior: Vec<BtNode>,
        fallback: Vec<BtNode>,
    ) -> Self {
        let root = BtNode::selector(vec![
            BtNode::selector(critical).with_label("C"),
            BtNode::selector(common).with_label("CK"),
            BtNode::selector(prior).with_label("PK"),
            BtNode::slot("NK"),
            BtNode::selector(fallback).with_label("F"),
        ]);
        Self { root, nk_index: 3 }
    }

    /// Validates the segment layout of an arbitrary tree.
    pub fn from_node(root: BtNode) -> Result<Self, GrammarError> {
        if root.kind != NodeKind::Selector {
            return Err(GrammarError::Layout("root must be a selector".into()));
        }
        let mut last_rank = 0;
        let mut nk_index = None;
        for (i, child) in root.children.iter().enumerate() {
            let tag = child
                .segment_label()
                .ok_or_else(|| GrammarError::Layout(format!("child {i} has no segment label")))?;
            let rank = SEGMENTS
                .iter()
                .position(|s| *s == tag)
                .ok_or_else(|| GrammarError::Layout(format!("unknown segment `{tag}`")))?;
            if rank < last_rank {
                return Err(GrammarError::Layout(format!(
                    "segment `{tag}` is out of order (expected C, CK, PK, NK, F)"
                )));
            }
            last_rank = rank;
            if tag == "NK" {
                if !matches!(child.kind, NodeKind::Slot { .. }) {
                    return Err(GrammarError::Layout("NK segment must be a slot".into()));
                }
                if nk_index.replace(i).is_some() {
                    return Err(GrammarError::Layout("more than one NK slot".into()));
                }
            }
        }
        let nk_index = nk_index.ok_or_else(|| GrammarError::Layout("missing NK slot".into()))?;
        Ok(Self { root, nk_index })
    }

    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        Self::from_node(parse(text)?)
    }

    pub fn root(&self) -> &BtNode {
        &self.root
    }

    pub fn into_root(self) -> BtNode {
        self.root
    }

    /// Subtrees merged into the new-knowledge slot, in acquisition order.
    pub fn new_knowledge(&self) -> &[BtNode] {
        &self.root.children[self.nk_index].children
    }

    /// The first top-level node carrying `tag`.
    pub fn segment(&self, tag: &str) -> Option<&BtNode> {
        self.root.children.iter().find(|c| c.segment_label() == Some(tag))
    }

    /// The control selector with `extra` placed just before the fallback segment.
    pub fn with_before_fallback(&self, extra: BtNode) -> BtNode {
        let mut root = self.root.clone();
        let at = root
            .children
            .iter()
            .position(|c| c.segment_label() == Some("F"))
            .unwrap_or(root.children.len());
        root.children.insert(at, extra);
        root
    }
}

/// Appends `knowledge` as the last child of the new-knowledge slot. Every other
/// segment is left untouched.
pub fn merge(control: &ControlTree, knowledge: BtNode) -> ControlTree {
    let mut merged = control.clone();
    merged.merge_in_place(knowledge);
    merged
}

impl ControlTree {
    pub fn merge_in_place(&mut self, knowledge: BtNode) {
        self.root.children[self.nk_index].children.push(knowledge);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::Condition;

    fn sel3() -> &'static str {
        "SEL[ SEQ[ COND:carrying(red) ACT:goto_zone(red) ] SLOT:NK ACT:random_walk() ]"
    }

    #[test]
    fn parses_the_reference_example() {
        let tree = parse(sel3()).unwrap();
        assert_eq!(tree.kind, NodeKind::Selector);
        assert_eq!(tree.children.len(), 3);
        assert_eq!(tree.children[0].children.len(), 2);
        assert_eq!(tree.children[1].kind, NodeKind::Slot { segment: "NK".into() });
        assert_eq!(serialize(&tree), sel3());
    }

    #[test]
    fn empty_sequence_is_allowed() {
        let tree = parse("SEQ[ ]").unwrap();
        assert_eq!(tree, BtNode::sequence(vec![]));
        assert_eq!(serialize(&BtNode::selector(vec![])), "SEL[ ]");
    }

    #[test]
    fn decorator_arity_violation() {
        let err = parse("DEC:invert[ COND:x() COND:y() ]").unwrap_err();
        assert!(matches!(err, GrammarError::Arity { line: 1, column: 1, .. }), "{err}");
        assert!(parse("DEC:invert[ ]").is_err());
    }

    #[test]
    fn leaf_with_children_is_an_arity_error() {
        assert!(matches!(
            parse("ACT:go()[ ACT:x() ]"),
            Err(GrammarError::Arity { .. })
        ));
    }

    #[test]
    fn unknown_tag_reports_position() {
        let err = parse("SEL[\n  FOO:bar()\n]").unwrap_err();
        assert_eq!(
            err,
            GrammarError::UnknownTag {
                line: 2,
                column: 3,
                tag: "FOO:bar()".into()
            }
        );
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "SEL[", "SEL[ ] ]", "SEL", "COND:x(a", "COND:9x()", "COND:x(a b)", "]"] {
            assert!(parse(bad).is_err(), "`{bad}` should not parse");
        }
        assert!(matches!(parse("SEL[ COND:x() "), Err(GrammarError::Syntax { .. })));
    }

    #[test]
    fn canonicalizes_whitespace_and_parens() {
        let tree = parse("  SEL[SEQ[COND:a   ACT:b(1,x)]\n\tSLOT:NK[ ] ]").unwrap();
        assert_eq!(serialize(&tree), "SEL[ SEQ[ COND:a() ACT:b(1,x) ] SLOT:NK ]");
    }

    #[test]
    fn labels_and_decorator_params_round_trip() {
        let text = "SEL#C[ DEC:cooldown(100,query)[ ACT:post_query() ] COND:x(1)#tag SLOT:NK[ ACT:y() ] ]";
        let tree = parse(text).unwrap();
        assert_eq!(tree.label.as_deref(), Some("C"));
        assert_eq!(serialize(&tree), text);
    }

    #[test]
    fn knowledge_subtree_shape() {
        let seq = ConditionSequence::new(vec![Condition::new("target_in_range", &["red"])]).unwrap();
        let t = make_knowledge_subtree(&seq, BtNode::action("pick_target", &["red"]));
        assert_eq!(serialize(&t), "SEQ[ COND:target_in_range(red) ACT:pick_target(red) ]");

        let two = ConditionSequence::new(vec![
            Condition::new("target_in_range", &["red"]),
            Condition::new("in_zone", &["none"]),
        ])
        .unwrap();
        let t = make_knowledge_subtree(&two, BtNode::action("pick_target", &["red"]));
        assert_eq!(t.children.len(), 3);

        assert!(ConditionSequence::new(vec![]).is_err());
    }

    fn control() -> ControlTree {
        ControlTree::new(
            vec![BtNode::action("halt", &[])],
            vec![BtNode::action("deliver", &[])],
            vec![BtNode::action("known", &[])],
            vec![BtNode::action("random_walk", &[])],
        )
    }

    #[test]
    fn merge_appends_and_preserves_other_segments() {
        let base = control();
        let k1 = BtNode::sequence(vec![BtNode::condition("a", &[]), BtNode::action("x", &[])]);
        let k2 = BtNode::sequence(vec![BtNode::condition("b", &[]), BtNode::action("y", &[])]);
        let once = merge(&base, k1.clone());
        assert_eq!(once.new_knowledge(), std::slice::from_ref(&k1));
        let twice = merge(&once, k2.clone());
        assert_eq!(twice.new_knowledge(), &[k1, k2]);
        for tag in ["C", "CK", "PK", "F"] {
            assert_eq!(
                serialize(base.segment(tag).unwrap()),
                serialize(twice.segment(tag).unwrap())
            );
        }
        let text = serialize(twice.root());
        assert!(text.contains("SLOT:NK[ SEQ[ COND:a() ACT:x() ] SEQ[ COND:b() ACT:y() ] ]"));
        assert_eq!(ControlTree::parse(&text).unwrap(), twice);
    }

    #[test]
    fn layout_validation() {
        assert!(ControlTree::parse("SEL[ SEL#C[ ] SLOT:NK SEL#F[ ] ]").is_ok());
        assert!(ControlTree::parse("SEL[ SEL#C[ ] SEL#F[ ] ]").is_err());
        assert!(ControlTree::parse("SEL[ SEL#F[ ] SLOT:NK ]").is_err());
        assert!(ControlTree::parse("SEL[ SLOT:NK SLOT:NK ]").is_err());
        assert!(ControlTree::parse("SEQ[ SLOT:NK ]").is_err());
        assert!(ControlTree::parse("SEL[ SEL#CK[ ] SEL#CK[ ] SLOT:NK ]").is_ok());
    }

    #[test]
    fn before_fallback_insertion() {
        let c = control();
        let root = c.with_before_fallback(BtNode::action("transient", &[]));
        let tags: Vec<_> = root.children.iter().map(|n| n.segment_label()).collect();
        assert_eq!(tags, [Some("C"), Some("CK"), Some("PK"), Some("NK"), None, Some("F")]);
    }
}
