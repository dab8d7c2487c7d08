//! Hash-chained event log and its file format.
//!
//! ```text
//! event_hash = hash("tiva/event", canonical({height, kind, payload_digest,
//!                                            intent_proof_digest?, prev_event_hash}))
//! payload_digest = hash("tiva/event/payload", canonical(payload))
//! ```
//!
//! The file holds one canonical event per line, each terminated by `\n`.
//! Height 0 is a `Genesis` event whose `prev_event_hash` is all zeros.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::crypto::{digest, digest_canonical, domain, Digest};
use crate::encoding::{canonical_decode, canonical_encode, encode_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Genesis,
    Registered,
    Issued,
    Revoked,
    PolicyDeployed,
    WalletCreated,
    Deposited,
    PaymentAccepted,
    PaymentRejected,
    WhitelistUpdated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub height: u64,
    pub kind: EventKind,
    pub payload: Value,
    pub payload_digest: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_proof_digest: Option<Digest>,
    pub prev_event_hash: Digest,
    pub event_hash: Digest,
}

#[derive(Serialize)]
struct HashInput<'a> {
    height: u64,
    kind: EventKind,
    payload_digest: &'a Digest,
    #[serde(skip_serializing_if = "Option::is_none")]
    intent_proof_digest: &'a Option<Digest>,
    prev_event_hash: &'a Digest,
}

pub fn payload_digest(payload: &Value) -> Digest {
    digest(
        domain::EVENT_PAYLOAD,
        &encode_value(payload).expect("payloads are built from encodable values"),
    )
}

impl LedgerEvent {
    pub fn compute_hash(&self) -> Digest {
        digest_canonical(
            domain::EVENT,
            &HashInput {
                height: self.height,
                kind: self.kind,
                payload_digest: &self.payload_digest,
                intent_proof_digest: &self.intent_proof_digest,
                prev_event_hash: &self.prev_event_hash,
            },
        )
        .expect("hash input is encodable")
    }

    /// Deserializes the payload into a typed record.
    pub fn payload_as<T: serde::de::DeserializeOwned>(&self) -> Option<T> {
        serde_json::from_value(self.payload.clone()).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("chain invalid at height {height}: {reason}")]
pub struct ChainFault {
    pub height: u64,
    pub reason: String,
}

impl ChainFault {
    fn at(height: u64, reason: impl Into<String>) -> Self {
        Self {
            height,
            reason: reason.into(),
        }
    }
}

/// Append-only event log. Only [`EventLog::append`] adds events, so a log
/// built in memory always verifies; logs read from disk are checked with
/// [`EventLog::verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<LedgerEvent>,
}

impl Default for EventLog {
    fn default() -> Self {
        Self::genesis()
    }
}

impl EventLog {
    pub fn genesis() -> Self {
        let mut log = EventLog { events: Vec::new() };
        log.push(
            EventKind::Genesis,
            serde_json::json!({"chain": "tiva", "version": 1}),
            None,
        );
        log
    }

    fn push(&mut self, kind: EventKind, payload: Value, intent: Option<Digest>) -> &LedgerEvent {
        let (height, prev) = match self.events.last() {
            Some(last) => (last.height + 1, last.event_hash),
            None => (0, Digest::ZERO),
        };
        let mut event = LedgerEvent {
            height,
            kind,
            payload_digest: payload_digest(&payload),
            payload,
            intent_proof_digest: intent,
            prev_event_hash: prev,
            event_hash: Digest::ZERO,
        };
        event.event_hash = event.compute_hash();
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    pub fn append(&mut self, kind: EventKind, payload: Value, intent: Option<Digest>) -> &LedgerEvent {
        assert!(kind != EventKind::Genesis, "genesis is only created by EventLog::genesis");
        self.push(kind, payload, intent)
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn head(&self) -> Option<&LedgerEvent> {
        self.events.last()
    }

    /// Hash of the newest event.
    pub fn head_hash(&self) -> Digest {
        self.head().map(|e| e.event_hash).unwrap_or(Digest::ZERO)
    }

    /// The first `n` events.
    pub fn prefix(&self, n: usize) -> EventLog {
        EventLog {
            events: self.events[..n.min(self.events.len())].to_vec(),
        }
    }

    pub fn verify(&self) -> Result<(), ChainFault> {
        verify_events(&self.events)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend(canonical_encode(e).expect("events are encodable"));
            out.push(b'\n');
        }
        out
    }

    /// Parses a chain file. Each line must be canonical; hashes are not
    /// checked here (see [`EventLog::verify`]).
    pub fn from_bytes(bytes: &[u8]) -> Result<EventLog, ChainFault> {
        if bytes.is_empty() {
            return Err(ChainFault::at(0, "empty chain file"));
        }
        if bytes.last() != Some(&b'\n') {
            let line_count = bytes.split(|b| *b == b'\n').count() as u64;
            return Err(ChainFault::at(line_count - 1, "missing final newline"));
        }
        let body = &bytes[..bytes.len() - 1];
        let events = body
            .split(|b| *b == b'\n')
            .enumerate()
            .map(|(i, line)| {
                canonical_decode::<LedgerEvent>(line)
                    .map_err(|e| ChainFault::at(i as u64, format!("unparseable event: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EventLog { events })
    }
}

fn check_event(e: &LedgerEvent, h: u64, prev: &Digest) -> Result<(), ChainFault> {
    if e.height != h {
        return Err(ChainFault::at(h, format!("height {} out of sequence", e.height)));
    }
    if h == 0 && e.kind != EventKind::Genesis {
        return Err(ChainFault::at(0, "first event is not genesis"));
    }
    if h > 0 && e.kind == EventKind::Genesis {
        return Err(ChainFault::at(h, "genesis after height 0"));
    }
    if e.prev_event_hash != *prev {
        return Err(ChainFault::at(h, "previous-hash link broken"));
    }
    if encode_value(&e.payload).is_err() || payload_digest(&e.payload) != e.payload_digest {
        return Err(ChainFault::at(h, "payload digest mismatch"));
    }
    if e.compute_hash() != e.event_hash {
        return Err(ChainFault::at(h, "event hash mismatch"));
    }
    Ok(())
}

fn verify_events(events: &[LedgerEvent]) -> Result<(), ChainFault> {
    if events.is_empty() {
        return Err(ChainFault::at(0, "no genesis event"));
    }
    let mut prev = Digest::ZERO;
    for (i, e) in events.iter().enumerate() {
        check_event(e, i as u64, &prev)?;
        prev = e.event_hash;
    }
    Ok(())
}

/// Position reached by a streaming verifier: the height the next line must
/// carry and the hash it must link to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainCursor {
    pub next_height: u64,
    pub prev_hash: Digest,
}

impl ChainCursor {
    pub fn start() -> Self {
        Self {
            next_height: 0,
            prev_hash: Digest::ZERO,
        }
    }

    /// Cursor just past `event`, trusted from an earlier verification.
    pub fn after(event: &LedgerEvent) -> Self {
        Self {
            next_height: event.height + 1,
            prev_hash: event.event_hash,
        }
    }

    /// Parses one line (without its newline) and checks it against the
    /// cursor, advancing on success.
    pub fn feed(&mut self, line: &[u8]) -> Result<(), ChainFault> {
        let h = self.next_height;
        let e = canonical_decode::<LedgerEvent>(line)
            .map_err(|err| ChainFault::at(h, format!("unparseable event: {err}")))?;
        check_event(&e, h, &self.prev_hash)?;
        *self = Self::after(&e);
        Ok(())
    }
}

/// Verifies consecutive chain-file lines starting at `cursor`. `bytes` must
/// end with a newline. Returns the cursor after the last line, so a file can
/// be checked in pieces with the same verdict as checking it whole.
pub fn verify_segment(bytes: &[u8], mut cursor: ChainCursor) -> Result<ChainCursor, ChainFault> {
    let Some(body) = bytes.strip_suffix(b"\n") else {
        let partial = bytes.split(|b| *b == b'\n').count() as u64 - 1;
        return Err(ChainFault::at(cursor.next_height + partial, "missing final newline"));
    };
    for line in body.split(|b| *b == b'\n') {
        cursor.feed(line)?;
    }
    Ok(cursor)
}

/// True iff every hash and link verifies from genesis and heights are
/// consecutive.
pub fn verify_chain(log: &EventLog) -> bool {
    log.verify().is_ok()
}

/// Verifies a chain file line by line, returning the number of events or
/// the first bad height.
pub fn verify_chain_bytes(bytes: &[u8]) -> Result<usize, ChainFault> {
    if bytes.is_empty() {
        return Err(ChainFault::at(0, "empty chain file"));
    }
    verify_segment(bytes, ChainCursor::start()).map(|c| c.next_height as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample(n: usize) -> EventLog {
        let mut log = EventLog::genesis();
        for i in 0..n {
            let intent = (i % 3 == 0).then(|| digest(domain::INTENT, &i.to_le_bytes()));
            log.append(EventKind::Deposited, json!({"i": i, "note": "x"}), intent);
        }
        log
    }

    #[test]
    fn genesis_only_chain_verifies() {
        let log = EventLog::genesis();
        assert_eq!(log.len(), 1);
        assert!(verify_chain(&log));
        assert_eq!(log.events()[0].prev_event_hash, Digest::ZERO);
    }

    #[test]
    fn untouched_chain_verifies_and_round_trips() {
        let log = sample(100);
        assert!(verify_chain(&log));
        let bytes = log.to_bytes();
        let back = EventLog::from_bytes(&bytes).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(verify_chain_bytes(&bytes), Ok(101));
    }

    #[test]
    fn payload_tamper_is_detected() {
        let mut log = sample(10);
        log.events[4].payload = json!({"i": 999, "note": "x"});
        assert_eq!(log.verify().unwrap_err().height, 4);
    }

    #[test]
    fn hash_tamper_is_detected() {
        let mut log = sample(10);
        log.events[7].event_hash.0[0] ^= 1;
        let fault = log.verify().unwrap_err();
        assert_eq!(fault.height, 7);
    }

    #[test]
    fn prefixes_verify() {
        let log = sample(20);
        for n in 1..=log.len() {
            assert!(verify_chain(&log.prefix(n)), "prefix {n}");
        }
        assert!(!verify_chain(&log.prefix(0)));
    }

    #[test]
    fn file_format_is_strict() {
        let bytes = sample(3).to_bytes();
        assert!(EventLog::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut doubled = bytes.clone();
        doubled.push(b'\n');
        assert!(EventLog::from_bytes(&doubled).is_err());
        assert!(EventLog::from_bytes(b"").is_err());
    }

    #[test]
    fn reordered_events_fail() {
        let mut log = sample(5);
        log.events.swap(2, 3);
        assert_eq!(log.verify().unwrap_err().height, 2);
    }

    #[test]
    fn segments_compose_at_line_boundaries() {
        let log = sample(6);
        let bytes = log.to_bytes();
        let cut = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(2).unwrap().0 + 1;
        let mid = verify_segment(&bytes[..cut], ChainCursor::start()).unwrap();
        assert_eq!(mid, ChainCursor::after(&log.events()[2]));
        let end = verify_segment(&bytes[cut..], mid).unwrap();
        assert_eq!(end.next_height, 7);
        assert_eq!(end.prev_hash, log.head_hash());
    }

    #[test]
    fn first_bad_line_wins_over_later_parse_errors() {
        let mut bytes = sample(4).to_bytes();
        let second = bytes.iter().position(|b| *b == b'\n').unwrap() + 1;
        let pos = second + bytes[second..].windows(4).position(|w| w == b"\"i\":").unwrap() + 5;
        bytes[pos] = b'7';
        let n = bytes.len();
        bytes[n - 3] = b'{';
        assert_eq!(verify_chain_bytes(&bytes).unwrap_err().height, 1);
    }
}
