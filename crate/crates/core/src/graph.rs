//! Trie context graph over tokenized bias phrases, with CTC transition rules.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into the model vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Index of a node inside a [`ContextGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Whether the last symbol a hypothesis consumed was a blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubState {
    Blank,
    NonBlank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Emission {
    Blank,
    Token(TokenId),
}

/// One outgoing CTC transition from a `(node, sub-state)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub target: NodeId,
    pub sub_state: SubState,
    pub emits: Emission,
    /// True when the transition consumes a new keyword token (earns the
    /// context-biasing bonus).
    pub advances: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasEntry {
    pub keyword_id: u32,
    pub surface: String,
    pub tokens: Vec<TokenId>,
}

impl BiasEntry {
    pub fn new(keyword_id: u32, surface: impl Into<String>, tokens: &[u32]) -> Self {
        Self {
            keyword_id,
            surface: surface.into(),
            tokens: tokens.iter().map(|&t| TokenId(t)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphConfig {
    pub vocab_size: usize,
    pub blank_id: TokenId,
}

impl GraphConfig {
    /// Blank defaults to the last vocabulary entry.
    pub fn with_default_blank(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            blank_id: TokenId(vocab_size.saturating_sub(1) as u32),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("keyword {keyword_id} has an empty token sequence")]
    EmptyTokenSequence { keyword_id: u32 },
    #[error("keyword {keyword_id} has an empty surface")]
    EmptySurface { keyword_id: u32 },
    #[error("keywords {first} ({first_surface:?}) and {second} ({second_surface:?}) share a token sequence")]
    DuplicateConflict {
        first: u32,
        first_surface: String,
        second: u32,
        second_surface: String,
    },
    #[error("keyword id {0} is used twice")]
    DuplicateKeywordId(u32),
    #[error("keyword {keyword_id} uses token {token}, outside vocabulary of size {vocab_size}")]
    TokenOutOfRange {
        keyword_id: u32,
        token: TokenId,
        vocab_size: usize,
    },
    #[error("keyword {keyword_id} contains the blank token {blank}")]
    BlankInKeyword { keyword_id: u32, blank: TokenId },
    #[error("blank id {blank} is outside vocabulary of size {vocab_size}")]
    BlankOutOfRange { blank: TokenId, vocab_size: usize },
}

#[derive(Debug, Clone)]
pub struct Node {
    /// Token consumed on entering this node; `None` only for the root.
    pub token: Option<TokenId>,
    /// Sorted by token id.
    children: Vec<(TokenId, NodeId)>,
    pub terminal_keyword: Option<u32>,
    pub depth: usize,
}

impl Node {
    pub fn children(&self) -> &[(TokenId, NodeId)] {
        &self.children
    }

    pub fn child(&self, token: TokenId) -> Option<NodeId> {
        self.children
            .binary_search_by_key(&token, |&(t, _)| t)
            .ok()
            .map(|i| self.children[i].1)
    }
}

/// Immutable trie over bias-phrase token sequences.
#[derive(Debug, Clone)]
pub struct ContextGraph {
    nodes: Vec<Node>,
    config: GraphConfig,
    keywords: Vec<BiasEntry>,
    keyword_index: HashMap<u32, usize>,
}

impl ContextGraph {
    pub fn build(entries: &[BiasEntry], config: GraphConfig) -> Result<Self, GraphError> {
        if config.blank_id.index() >= config.vocab_size {
            return Err(GraphError::BlankOutOfRange {
                blank: config.blank_id,
                vocab_size: config.vocab_size,
            });
        }
        let mut graph = ContextGraph {
            nodes: vec![Node {
                token: None,
                children: Vec::new(),
                terminal_keyword: None,
                depth: 0,
            }],
            config,
            keywords: Vec::new(),
            keyword_index: HashMap::new(),
        };
        let mut seen_ids = HashMap::new();
        for entry in entries {
            graph.validate(entry)?;
            if seen_ids.insert(entry.keyword_id, ()).is_some() {
                return Err(GraphError::DuplicateKeywordId(entry.keyword_id));
            }
            graph.insert(entry)?;
        }
        Ok(graph)
    }

    pub fn empty(config: GraphConfig) -> Self {
        Self::build(&[], config).expect("empty bias list with valid blank")
    }

    fn validate(&self, entry: &BiasEntry) -> Result<(), GraphError> {
        let keyword_id = entry.keyword_id;
        if entry.tokens.is_empty() {
            return Err(GraphError::EmptyTokenSequence { keyword_id });
        }
        if entry.surface.trim().is_empty() {
            return Err(GraphError::EmptySurface { keyword_id });
        }
        for &token in &entry.tokens {
            if token.index() >= self.config.vocab_size {
                return Err(GraphError::TokenOutOfRange {
                    keyword_id,
                    token,
                    vocab_size: self.config.vocab_size,
                });
            }
            if token == self.config.blank_id {
                return Err(GraphError::BlankInKeyword {
                    keyword_id,
                    blank: token,
                });
            }
        }
        Ok(())
    }

    fn insert(&mut self, entry: &BiasEntry) -> Result<(), GraphError> {
        let mut node = NodeId::ROOT;
        for &token in &entry.tokens {
            node = match self.nodes[node.index()].child(token) {
                Some(next) => next,
                None => {
                    let next = NodeId(self.nodes.len() as u32);
                    let depth = self.nodes[node.index()].depth + 1;
                    self.nodes.push(Node {
                        token: Some(token),
                        children: Vec::new(),
                        terminal_keyword: None,
                        depth,
                    });
                    let children = &mut self.nodes[node.index()].children;
                    let at = children.partition_point(|&(t, _)| t < token);
                    children.insert(at, (token, next));
                    next
                }
            };
        }
        let terminal = &mut self.nodes[node.index()];
        match terminal.terminal_keyword {
            None => {
                terminal.terminal_keyword = Some(entry.keyword_id);
                self.keyword_index
                    .insert(entry.keyword_id, self.keywords.len());
                self.keywords.push(entry.clone());
                Ok(())
            }
            Some(existing) => {
                let first = &self.keywords[self.keyword_index[&existing]];
                if first.surface == entry.surface {
                    Ok(())
                } else {
                    Err(GraphError::DuplicateConflict {
                        first: existing,
                        first_surface: first.surface.clone(),
                        second: entry.keyword_id,
                        second_surface: entry.surface.clone(),
                    })
                }
            }
        }
    }

    pub fn config(&self) -> GraphConfig {
        self.config
    }

    pub fn blank_id(&self) -> TokenId {
        self.config.blank_id
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// True when no keyword is registered.
    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// Registered (deduplicated) keywords in insertion order.
    pub fn keywords(&self) -> &[BiasEntry] {
        &self.keywords
    }

    pub fn keyword(&self, keyword_id: u32) -> Option<&BiasEntry> {
        self.keyword_index
            .get(&keyword_id)
            .map(|&i| &self.keywords[i])
    }

    pub fn surface(&self, keyword_id: u32) -> Option<&str> {
        self.keyword(keyword_id).map(|k| k.surface.as_str())
    }

    pub fn terminal_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.terminal_keyword.is_some())
            .count()
    }

    /// Largest token id used by any keyword.
    pub fn max_token(&self) -> Option<TokenId> {
        self.nodes.iter().filter_map(|n| n.token).max()
    }

    /// Follows `tokens` from the root.
    pub fn walk(&self, tokens: &[TokenId]) -> Option<NodeId> {
        tokens
            .iter()
            .try_fold(NodeId::ROOT, |node, &t| self.node(node).child(t))
    }

    /// CTC transitions out of `(node, sub_state)`.
    ///
    /// Blank self-loop always; repeat self-loop only from the non-blank
    /// sub-state of a non-root node; advance to a child always from blank,
    /// and from non-blank only when the child token differs from the
    /// current one.
    pub fn transitions(&self, node: NodeId, sub_state: SubState) -> Vec<Transition> {
        let n = self.node(node);
        let mut out = Vec::with_capacity(n.children.len() + 2);
        out.push(Transition {
            target: node,
            sub_state: SubState::Blank,
            emits: Emission::Blank,
            advances: false,
        });
        if let (Some(token), SubState::NonBlank) = (n.token, sub_state) {
            out.push(Transition {
                target: node,
                sub_state: SubState::NonBlank,
                emits: Emission::Token(token),
                advances: false,
            });
        }
        for &(token, child) in &n.children {
            if sub_state == SubState::NonBlank && n.token == Some(token) {
                continue;
            }
            out.push(Transition {
                target: child,
                sub_state: SubState::NonBlank,
                emits: Emission::Token(token),
                advances: true,
            });
        }
        out
    }
}
