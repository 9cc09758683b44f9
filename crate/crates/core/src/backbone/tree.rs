use serde::{Deserialize, Serialize};

pub type BlockId = usize;

pub const GENESIS: BlockId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "party")]
pub enum Creator {
    Genesis,
    Honest(usize),
    Adversary,
}

impl Creator {
    pub fn is_adversary(self) -> bool {
        self == Creator::Adversary
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub parent: Option<BlockId>,
    pub height: u64,
    pub symbol: u32,
    pub creator: Creator,
    pub round_created: u64,
    pub published_round: Option<u64>,
}

/// Arena of every block ever mined, published or not. Ids are creation
/// order, so a parent always has a smaller id than its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTree {
    blocks: Vec<Block>,
    best_published: BlockId,
}

impl Default for BlockTree {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockTree {
    pub fn new() -> Self {
        BlockTree {
            blocks: vec![Block {
                id: GENESIS,
                parent: None,
                height: 0,
                symbol: 0,
                creator: Creator::Genesis,
                round_created: 0,
                published_round: Some(0),
            }],
            best_published: GENESIS,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, id: BlockId) -> &Block {
        &self.blocks[id]
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self, id: BlockId) -> u64 {
        self.blocks[id].height
    }

    pub fn add(&mut self, parent: BlockId, symbol: u32, creator: Creator, round: u64) -> BlockId {
        let id = self.blocks.len();
        let height = self.blocks[parent].height + 1;
        self.blocks.push(Block {
            id,
            parent: Some(parent),
            height,
            symbol,
            creator,
            round_created: round,
            published_round: None,
        });
        id
    }

    pub fn is_published(&self, id: BlockId) -> bool {
        self.blocks[id].published_round.is_some()
    }

    /// Publishes `id` and any unpublished ancestors. Returns the newly
    /// published ids, oldest first. Already published blocks keep their
    /// original round.
    pub fn publish(&mut self, id: BlockId, round: u64) -> Vec<BlockId> {
        let mut fresh = Vec::new();
        let mut cur = Some(id);
        while let Some(b) = cur {
            if self.blocks[b].published_round.is_some() {
                break;
            }
            self.blocks[b].published_round = Some(round);
            fresh.push(b);
            cur = self.blocks[b].parent;
        }
        fresh.reverse();
        if self.blocks[id].height > self.blocks[self.best_published].height {
            self.best_published = id;
        }
        fresh
    }

    /// Highest published block; the earliest one wins ties.
    pub fn best_published(&self) -> BlockId {
        self.best_published
    }

    /// The ancestor of `tip` at `height`, or `None` if `tip` is lower.
    pub fn ancestor_at(&self, tip: BlockId, height: u64) -> Option<BlockId> {
        let mut cur = tip;
        if self.blocks[cur].height < height {
            return None;
        }
        while self.blocks[cur].height > height {
            cur = self.blocks[cur].parent.expect("non-genesis block has a parent");
        }
        Some(cur)
    }

    pub fn is_ancestor(&self, anc: BlockId, tip: BlockId) -> bool {
        self.ancestor_at(tip, self.blocks[anc].height) == Some(anc)
    }

    pub fn lca(&self, a: BlockId, b: BlockId) -> BlockId {
        let (mut a, mut b) = (a, b);
        while self.blocks[a].height > self.blocks[b].height {
            a = self.blocks[a].parent.expect("above genesis");
        }
        while self.blocks[b].height > self.blocks[a].height {
            b = self.blocks[b].parent.expect("above genesis");
        }
        while a != b {
            a = self.blocks[a].parent.expect("above genesis");
            b = self.blocks[b].parent.expect("above genesis");
        }
        a
    }

    /// Blocks from genesis to `tip`, inclusive.
    pub fn chain(&self, tip: BlockId) -> Vec<BlockId> {
        let mut out = Vec::with_capacity(self.blocks[tip].height as usize + 1);
        let mut cur = Some(tip);
        while let Some(b) = cur {
            out.push(b);
            cur = self.blocks[b].parent;
        }
        out.reverse();
        out
    }

    pub fn annotated_chain(&self, tip: BlockId) -> AnnotatedChain {
        let blocks = self.chain(tip);
        let adversarial = blocks
            .iter()
            .map(|&b| self.blocks[b].creator.is_adversary())
            .collect();
        AnnotatedChain {
            blocks,
            adversarial,
        }
    }

    /// Symbols of the `count` blocks starting at `height` on the chain
    /// ending at `tip`, if the chain is long enough.
    pub fn symbols_from(&self, tip: BlockId, height: u64, count: u64) -> Option<Vec<u32>> {
        let last = height + count - 1;
        let mut cur = self.ancestor_at(tip, last)?;
        let mut out = vec![0; count as usize];
        for i in (0..count as usize).rev() {
            out[i] = self.blocks[cur].symbol;
            if i > 0 {
                cur = self.blocks[cur].parent.expect("above genesis");
            }
        }
        Some(out)
    }
}

/// A chain from genesis with a per-block flag saying whether the adversary
/// created it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedChain {
    pub blocks: Vec<BlockId>,
    pub adversarial: Vec<bool>,
}

impl AnnotatedChain {
    /// Builds a chain with ids `0..len` from creator flags, for tests and
    /// offline analysis.
    pub fn from_flags(adversarial: Vec<bool>) -> Self {
        AnnotatedChain {
            blocks: (0..adversarial.len()).collect(),
            adversarial,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn position(&self, id: BlockId) -> Option<usize> {
        self.blocks.iter().position(|&b| b == id)
    }
}
