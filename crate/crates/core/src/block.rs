//! Immutable blocks and their wire/dump representation.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::codec::{
    check_id, decode_content, encode_content, make_id, BlockId, CodecError, ContentHash, NodeId,
    PrivateKey, BLOCK_ID_LEN,
};

/// A block `(id, (payload, preds))`. Predecessors are kept sorted and
/// deduplicated. Signature verification is computed once and cached.
pub struct Block {
    id: BlockId,
    payload: Vec<u8>,
    preds: Vec<BlockId>,
    hash: ContentHash,
    authentic: OnceLock<bool>,
}

impl Block {
    /// Assemble a block from parts without checking the signature. Use
    /// [`Block::is_authentic`] before trusting it.
    pub fn from_parts(id: BlockId, payload: Vec<u8>, preds: Vec<BlockId>) -> Result<Self, CodecError> {
        let encoded = encode_content(&payload, &preds)?;
        let mut preds = preds;
        preds.sort_unstable();
        Ok(Block {
            id,
            payload,
            preds,
            hash: ContentHash::of(&encoded),
            authentic: OnceLock::new(),
        })
    }

    /// Sign `(payload, preds)` with `key`.
    pub fn create(key: &PrivateKey, payload: Vec<u8>, preds: Vec<BlockId>) -> Result<Self, CodecError> {
        let encoded = encode_content(&payload, &preds)?;
        let hash = ContentHash::of(&encoded);
        let id = make_id(&hash, key);
        let mut preds = preds;
        preds.sort_unstable();
        // A fresh Ed25519 signature over `hash` verifies under the signer's key.
        let authentic = OnceLock::new();
        let _ = authentic.set(true);
        Ok(Block {
            id,
            payload,
            preds,
            hash,
            authentic,
        })
    }

    pub fn id(&self) -> BlockId {
        self.id
    }

    pub fn creator(&self) -> NodeId {
        self.id.creator()
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn preds(&self) -> &[BlockId] {
        &self.preds
    }

    pub fn content_hash(&self) -> ContentHash {
        self.hash
    }

    pub fn is_genesis(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn is_authentic(&self) -> bool {
        *self.authentic.get_or_init(|| check_id(&self.id, &self.hash))
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = self.id.to_bytes().to_vec();
        // Cannot fail: the same content was encoded at construction.
        out.extend(encode_content(&self.payload, &self.preds).expect("content re-encodes"));
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, CodecError> {
        let id = BlockId::from_slice(bytes)?;
        let (payload, preds) = decode_content(&bytes[BLOCK_ID_LEN..])?;
        Block::from_parts(id, payload, preds)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_wire())
    }

    pub fn from_hex(line: &str) -> Result<Self, CodecError> {
        let bytes = hex::decode(line.trim()).map_err(|e| CodecError::Hex(e.to_string()))?;
        Block::from_wire(&bytes)
    }
}

impl Clone for Block {
    fn clone(&self) -> Self {
        let authentic = OnceLock::new();
        if let Some(v) = self.authentic.get() {
            let _ = authentic.set(*v);
        }
        Block {
            id: self.id,
            payload: self.payload.clone(),
            preds: self.preds.clone(),
            hash: self.hash,
            authentic,
        }
    }
}

impl PartialEq for Block {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.payload == other.payload && self.preds == other.preds
    }
}

impl Eq for Block {}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Block")
            .field("id", &self.id)
            .field("payload_len", &self.payload.len())
            .field("preds", &self.preds)
            .finish()
    }
}

/// Newline-delimited hex dump of blocks, one wire record per line.
pub fn write_dump<'a>(blocks: impl IntoIterator<Item = &'a Block>) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&b.to_hex());
        out.push('\n');
    }
    out
}

/// Parse a dump produced by [`write_dump`]. Blank lines and lines starting
/// with `#` are ignored. Errors carry the 1-based line number.
pub fn read_dump(text: &str) -> Result<Vec<Arc<Block>>, (usize, CodecError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| Block::from_hex(l).map(Arc::new).map_err(|e| (n + 1, e)))
        .collect()
}
