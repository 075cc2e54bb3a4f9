//! Node identities, block identities and the canonical content encoding.
//!
//! A block identity is the Ed25519 signature over the SHA-256 digest of the
//! block content, carried together with the creator's verification key. The
//! content encoding is length-prefixed and lists predecessors in ascending
//! identity-byte order, so equal (payload, predecessor set) pairs always
//! encode to the same bytes.
//!
//! ```text
//! content  := payload_len:u32be payload pred_count:u32be pred_id*
//! block_id := signature[64] creator[32]
//! wire     := block_id content
//! ```

use std::cmp::Ordering;
use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const NODE_ID_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const BLOCK_ID_LEN: usize = SIGNATURE_LEN + NODE_ID_LEN;
pub const HASH_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("duplicate predecessor {0}")]
    DuplicatePredecessor(BlockId),
    #[error("truncated input: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after block content")]
    TrailingBytes(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("payload of {0} bytes exceeds the u32 length prefix")]
    TooLarge(usize),
    #[error("predecessors not in canonical order")]
    NonCanonical,
}

/// Public verification key of a node. Ordered by key bytes, which is used
/// only to make iteration deterministic.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId([u8; NODE_ID_LEN]);

impl NodeId {
    pub fn from_bytes(bytes: [u8; NODE_ID_LEN]) -> Self {
        NodeId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; NODE_ID_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.short())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

/// Signing key of a node. Deliberately neither `Serialize` nor `Display`.
#[derive(Clone)]
pub struct PrivateKey {
    signing: SigningKey,
    node: NodeId,
}

impl PrivateKey {
    pub fn node_id(&self) -> NodeId {
        self.node
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("node", &self.node)
            .finish_non_exhaustive()
    }
}

/// Deterministic key generation: the secret scalar seed is the SHA-256 of
/// `seed`. Any byte string, including the empty one, is accepted.
pub fn keygen(seed: &[u8]) -> (NodeId, PrivateKey) {
    let secret: [u8; 32] = Sha256::digest(seed).into();
    let signing = SigningKey::from_bytes(&secret);
    let node = NodeId(signing.verifying_key().to_bytes());
    (node, PrivateKey { signing, node })
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash([u8; HASH_LEN]);

impl ContentHash {
    pub fn of(encoded_content: &[u8]) -> Self {
        ContentHash(Sha256::digest(encoded_content).into())
    }

    pub fn from_bytes(bytes: [u8; HASH_LEN]) -> Self {
        ContentHash(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; HASH_LEN] {
        &self.0
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", hex::encode(&self.0[..8]))
    }
}

/// Signed-hash block identity. Equality and ordering are over the identity
/// bytes `signature || creator`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct BlockId {
    signature: [u8; SIGNATURE_LEN],
    creator: NodeId,
}

/// Signatures are uniformly distributed, so a prefix of one is as good a
/// hash key as the whole identity.
impl std::hash::Hash for BlockId {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        let word = |k: usize| u64::from_le_bytes(self.signature[k..k + 8].try_into().expect("8 bytes"));
        state.write_u64(word(0));
        state.write_u64(word(8));
    }
}

/// Multiply-rotate hasher for maps keyed by [`BlockId`] or [`NodeId`], whose
/// hash input is already uniformly distributed.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdHasher(u64);

impl std::hash::Hasher for IdHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(w));
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = (self.0.rotate_left(5) ^ x).wrapping_mul(0x517c_c1b7_2722_0a95);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

pub type IdMap<V> = std::collections::HashMap<BlockId, V, std::hash::BuildHasherDefault<IdHasher>>;
pub type IdSet = std::collections::HashSet<BlockId, std::hash::BuildHasherDefault<IdHasher>>;
pub type NodeMap<V> = std::collections::HashMap<NodeId, V, std::hash::BuildHasherDefault<IdHasher>>;

impl BlockId {
    pub fn from_parts(signature: [u8; SIGNATURE_LEN], creator: NodeId) -> Self {
        BlockId { signature, creator }
    }

    pub fn creator(&self) -> NodeId {
        self.creator
    }

    pub fn signature(&self) -> &[u8; SIGNATURE_LEN] {
        &self.signature
    }

    pub fn to_bytes(&self) -> [u8; BLOCK_ID_LEN] {
        let mut out = [0u8; BLOCK_ID_LEN];
        out[..SIGNATURE_LEN].copy_from_slice(&self.signature);
        out[SIGNATURE_LEN..].copy_from_slice(self.creator.as_bytes());
        out
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < BLOCK_ID_LEN {
            return Err(CodecError::Truncated {
                offset: 0,
                needed: BLOCK_ID_LEN,
            });
        }
        let mut signature = [0u8; SIGNATURE_LEN];
        signature.copy_from_slice(&bytes[..SIGNATURE_LEN]);
        let mut creator = [0u8; NODE_ID_LEN];
        creator.copy_from_slice(&bytes[SIGNATURE_LEN..BLOCK_ID_LEN]);
        Ok(BlockId::from_parts(signature, NodeId(creator)))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    /// First 8 hex characters of the identity bytes, for display only.
    pub fn short(&self) -> String {
        hex::encode(&self.signature[..4])
    }
}

impl Ord for BlockId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.signature
            .cmp(&other.signature)
            .then_with(|| self.creator.cmp(&other.creator))
    }
}

impl PartialOrd for BlockId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({}@{})", self.short(), self.creator.short())
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

/// Canonical content encoding. Predecessors may be given in any order; they
/// are written sorted. Duplicates are rejected.
pub fn encode_content(payload: &[u8], preds: &[BlockId]) -> Result<Vec<u8>, CodecError> {
    let mut sorted = preds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(CodecError::DuplicatePredecessor(w[0]));
    }
    let payload_len = u32::try_from(payload.len()).map_err(|_| CodecError::TooLarge(payload.len()))?;
    let mut out = Vec::with_capacity(8 + payload.len() + sorted.len() * BLOCK_ID_LEN);
    out.extend_from_slice(&payload_len.to_be_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&(sorted.len() as u32).to_be_bytes());
    for id in &sorted {
        out.extend_from_slice(&id.to_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_content`]. The whole input must be consumed.
pub fn decode_content(bytes: &[u8]) -> Result<(Vec<u8>, Vec<BlockId>), CodecError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let payload_len = cur.u32()? as usize;
    let payload = cur.take(payload_len)?.to_vec();
    let count = cur.u32()? as usize;
    let mut preds = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        preds.push(BlockId::from_slice(cur.take(BLOCK_ID_LEN)?)?);
    }
    if cur.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - cur.pos));
    }
    // Re-encoding catches unsorted or duplicated predecessor lists.
    let canonical = encode_content(&payload, &preds)?;
    if canonical != bytes {
        return Err(CodecError::NonCanonical);
    }
    Ok((payload, preds))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CodecError::Truncated {
                offset: self.pos,
                needed: n,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Sign a content hash. Ed25519 signatures are deterministic, so the same
/// (hash, key) always yields the same identity.
pub fn make_id(hash: &ContentHash, key: &PrivateKey) -> BlockId {
    let sig = key.signing.sign(hash.as_bytes());
    BlockId::from_parts(sig.to_bytes(), key.node)
}

/// True iff the identity's signature verifies over `hash` under the
/// identity's creator key. Garbage keys or signatures yield `false`.
pub fn check_id(id: &BlockId, hash: &ContentHash) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(id.creator.as_bytes()) else {
        return false;
    };
    let sig = Signature::from_bytes(id.signature());
    key.verify(hash.as_bytes(), &sig).is_ok()
}

impl NodeId {
    pub fn from_hex(text: &str) -> Result<Self, CodecError> {
        let bytes = hex::decode(text.trim()).map_err(|e| CodecError::Hex(e.to_string()))?;
        let arr: [u8; NODE_ID_LEN] = bytes.try_into().map_err(|b: Vec<u8>| CodecError::Truncated {
            offset: b.len(),
            needed: NODE_ID_LEN,
        })?;
        Ok(NodeId(arr))
    }
}

impl BlockId {
    pub fn from_hex(text: &str) -> Result<Self, CodecError> {
        let bytes = hex::decode(text.trim()).map_err(|e| CodecError::Hex(e.to_string()))?;
        if bytes.len() > BLOCK_ID_LEN {
            return Err(CodecError::TrailingBytes(bytes.len() - BLOCK_ID_LEN));
        }
        BlockId::from_slice(&bytes)
    }
}

// Both identities serialize as lowercase hex strings.
impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        NodeId::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        BlockId::from_hex(&text).map_err(serde::de::Error::custom)
    }
}
