//! Canonical byte form of a custody event, the input to its chain hash.
//!
//! Layout, in order:
//!
//! ```text
//! seq            u64 big-endian
//! device_id      str
//! location.x     real
//! location.y     real
//! location.region str
//! timestamp      u64 big-endian
//! weight_kg      real
//! recipient_id   str
//! event_kind     str (variant name)
//! payload        u32 big-endian entry count, then key str / value str pairs in key order
//! ```
//!
//! `str` is a u32 big-endian byte length followed by UTF-8 bytes. `real` is the
//! shortest decimal string that round-trips the f64, encoded as a `str`.
//!
//! `this_hash = SHA-256(prev_hash || canonical bytes)`.

use sha2::{Digest as _, Sha256};

use super::event::{CustodyEvent, Digest};

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_be_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_real(buf: &mut Vec<u8>, x: f64) {
    // f64's Display is the shortest round-tripping decimal, never exponent form.
    put_str(buf, &x.to_string());
}

/// Serialises every field except `prev_hash` and `this_hash`.
pub fn canonical_bytes(event: &CustodyEvent) -> Vec<u8> {
    let mut buf = Vec::with_capacity(128 + event.payload.len() * 32);
    buf.extend_from_slice(&event.seq.to_be_bytes());
    put_str(&mut buf, &event.device_id);
    put_real(&mut buf, event.location.x);
    put_real(&mut buf, event.location.y);
    put_str(&mut buf, event.location.region.as_str());
    buf.extend_from_slice(&event.timestamp.to_be_bytes());
    put_real(&mut buf, event.weight_kg);
    put_str(&mut buf, event.recipient_id.as_str());
    put_str(&mut buf, event.event_kind.as_str());
    buf.extend_from_slice(&(event.payload.len() as u32).to_be_bytes());
    for (k, v) in &event.payload {
        put_str(&mut buf, k);
        put_str(&mut buf, v);
    }
    buf
}

pub fn event_hash(event: &CustodyEvent) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(event.prev_hash.0);
    hasher.update(canonical_bytes(event));
    Digest(hasher.finalize().into())
}
