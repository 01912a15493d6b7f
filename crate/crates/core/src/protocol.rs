//! Two-party reconstruction protocol over a framed channel.
//!
//! Party B holds a noisy oracle hiding a progression family. Party A runs
//! QFT detection against it: each round A sends the uniform state, B applies
//! its phase oracle, A applies the QFT and measures. Membership probes reuse
//! the same exchange with a basis state and read the sign of the reply,
//! which works because the simulated channel carries amplitudes, not qubits.
//! Once A has rebuilt the square, B sends instructions (cell, transform)
//! whose parities spell out its message.
//!
//! Frames are one tag byte, a big-endian `u32` payload length and the
//! payload. State payloads are `(re, im)` pairs of little-endian `f64`;
//! everything else is JSON.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{self, Alg2Params, DetectError};
use crate::markedset::{MarkedSet, MembershipOracle, NoiseSpec};
use crate::qsim::{self, StateVector};
use crate::rng;
use crate::squares::{construct_order_n, MagicSquare, ProgressionFamily, SquareError};

pub const HEADER_LEN: usize = 5;
pub const MAX_PAYLOAD: usize = 1 << 28;
/// Norm tolerance for every transmitted state.
pub const STATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown frame tag {0}")]
    UnknownTag(u8),
    #[error("frame truncated: header says {declared} bytes, {actual} present")]
    Truncated { declared: usize, actual: usize },
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversized(usize),
    #[error("unexpected {got:?} frame, wanted {want}")]
    Unexpected { got: Tag, want: &'static str },
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error("channel closed")]
    Closed,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("instruction refers to cell ({row}, {col}) of an order-{order} square")]
    Instruction {
        row: usize,
        col: usize,
        order: usize,
    },
    #[error("no cell and transform of the square carries bit {0}")]
    Unencodable(u8),
    #[error("invalid secret: {0}")]
    Secret(String),
    #[error("no reconstruction after {rounds} rounds")]
    BudgetExhausted {
        rounds: usize,
        transcript: Transcript,
    },
    #[error(transparent)]
    Qsim(#[from] qsim::QsimError),
    #[error(transparent)]
    Square(#[from] SquareError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tag {
    Representatives = 1,
    State = 2,
    OracleReply = 3,
    Instruction = 4,
    Ack = 5,
}

impl TryFrom<u8> for Tag {
    type Error = ProtocolError;
    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Tag::Representatives,
            2 => Tag::State,
            3 => Tag::OracleReply,
            4 => Tag::Instruction,
            5 => Tag::Ack,
            other => return Err(ProtocolError::UnknownTag(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub tag: Tag,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn json<T: Serialize>(tag: Tag, value: &T) -> Self {
        Frame {
            tag,
            payload: serde_json::to_vec(value).expect("protocol messages serialise"),
        }
    }

    pub fn state(tag: Tag, state: &StateVector) -> Self {
        let mut payload = Vec::with_capacity(16 * state.amplitudes().len());
        for a in state.amplitudes() {
            payload.extend_from_slice(&a.re.to_le_bytes());
            payload.extend_from_slice(&a.im.to_le_bytes());
        }
        Frame { tag, payload }
    }

    pub fn parse_json<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_slice(&self.payload).map_err(|e| ProtocolError::Payload(e.to_string()))
    }

    pub fn parse_state(&self) -> Result<StateVector> {
        if !self.payload.len().is_multiple_of(16) {
            return Err(ProtocolError::Payload(format!(
                "{} bytes is not a whole number of amplitudes",
                self.payload.len()
            )));
        }
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        let amps = self
            .payload
            .chunks_exact(16)
            .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
            .collect();
        Ok(StateVector::from_amplitudes(amps, STATE_TOLERANCE)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.tag as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(ProtocolError::Truncated {
                declared: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let tag = Tag::try_from(bytes[0])?;
        let declared = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
        if declared > MAX_PAYLOAD {
            return Err(ProtocolError::Oversized(declared));
        }
        let actual = bytes.len() - HEADER_LEN;
        if actual != declared {
            return Err(ProtocolError::Truncated { declared, actual });
        }
        Ok(Frame {
            tag,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

/// A bidirectional frame transport.
pub trait Channel: Send {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()>;
    fn recv_bytes(&mut self) -> Result<Vec<u8>>;

    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.send_bytes(&frame.encode())
    }

    fn recv(&mut self) -> Result<Frame> {
        Frame::decode(&self.recv_bytes()?)
    }
}

/// In-process duplex queue.
pub struct MemoryChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl MemoryChannel {
    pub fn pair() -> (MemoryChannel, MemoryChannel) {
        let (tx_a, rx_b) = mpsc::channel();
        let (tx_b, rx_a) = mpsc::channel();
        (
            MemoryChannel { tx: tx_a, rx: rx_a },
            MemoryChannel { tx: tx_b, rx: rx_b },
        )
    }
}

impl Channel for MemoryChannel {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| ProtocolError::Closed)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| ProtocolError::Closed)
    }
}

/// Local stream socket.
pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpChannel { stream })
    }
}

impl Channel for TcpChannel {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.stream.write_all(bytes)?;
        Ok(self.stream.flush()?)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>> {
        let mut header = [0u8; HEADER_LEN];
        match self.stream.read_exact(&mut header) {
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(ProtocolError::Closed)
            }
            other => other?,
        }
        Tag::try_from(header[0])?;
        let len = u32::from_be_bytes(header[1..].try_into().expect("4 bytes")) as usize;
        if len > MAX_PAYLOAD {
            return Err(ProtocolError::Oversized(len));
        }
        let mut out = header.to_vec();
        out.resize(HEADER_LEN + len, 0);
        self.stream.read_exact(&mut out[HEADER_LEN..])?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub from: Party,
    pub tag: Tag,
    pub len: usize,
    /// FNV-1a of the payload, hex.
    pub digest: String,
    /// Classical payloads verbatim; absent for states.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entries serialise") + "\n")
            .collect()
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.entries.iter().filter(|e| e.tag == tag).count()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Logs every frame a party sends. The exchange is strictly turn-based, so
/// the shared log order is deterministic.
struct Recorded<C> {
    inner: C,
    party: Party,
    log: Arc<Mutex<Transcript>>,
}

impl<C: Channel> Recorded<C> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        {
            let mut log = self.log.lock().expect("transcript lock");
            let seq = log.entries.len();
            let classical = !matches!(frame.tag, Tag::State | Tag::OracleReply);
            log.entries.push(TranscriptEntry {
                seq,
                from: self.party,
                tag: frame.tag,
                len: frame.payload.len(),
                digest: format!("{:016x}", fnv1a(&frame.payload)),
                body: classical.then(|| String::from_utf8_lossy(&frame.payload).into_owned()),
            });
        }
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Frame> {
        self.inner.recv()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity = 0,
    AddK = 1,
    AddD = 2,
}

impl TryFrom<u8> for Transform {
    type Error = ProtocolError;
    fn try_from(t: u8) -> Result<Self> {
        Ok(match t {
            0 => Transform::Identity,
            1 => Transform::AddK,
            2 => Transform::AddD,
            other => return Err(ProtocolError::Payload(format!("transform id {other}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub row: usize,
    pub col: usize,
    pub transform: Transform,
}

/// Parity of the transformed entry.
pub fn encode_bit(square: &MagicSquare, ins: &Instruction, k: i64, d: i64) -> Result<u8> {
    let n = square.order();
    if ins.row >= n || ins.col >= n {
        return Err(ProtocolError::Instruction {
            row: ins.row,
            col: ins.col,
            order: n,
        });
    }
    let v = square.entry(ins.row, ins.col)
        + match ins.transform {
            Transform::Identity => 0,
            Transform::AddK => k,
            Transform::AddD => d,
        };
    Ok(v.rem_euclid(2) as u8)
}

/// A reads the bit with the same rule on its own copy of the square.
pub fn decode_bit(square: &MagicSquare, ins: &Instruction, k: i64, d: i64) -> Result<u8> {
    encode_bit(square, ins, k, d)
}

/// Spacing used by the `AddD` transform: the gap between the first two
/// starts.
pub fn family_spacing(family: &ProgressionFamily) -> i64 {
    match family.starts() {
        [a, b, ..] => b - a,
        _ => 0,
    }
}

/// What B knows.
#[derive(Debug, Clone, PartialEq)]
pub struct Secret {
    pub family: ProgressionFamily,
    pub oracle: MarkedSet,
    /// `None` withholds them and forces the autocorrelation path.
    pub representatives: Option<Vec<i64>>,
    pub bits: Vec<u8>,
}

impl Secret {
    pub fn new(
        family: ProgressionFamily,
        oracle: MarkedSet,
        representatives: Option<Vec<i64>>,
        bits: Vec<u8>,
    ) -> Result<Self> {
        if family.elements().any(|x| !oracle.query(x)) {
            return Err(ProtocolError::Secret(
                "oracle misses a family element".into(),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(ProtocolError::Secret("message bits must be 0 or 1".into()));
        }
        if let Some(reps) = &representatives {
            if reps.len() != family.order() {
                return Err(ProtocolError::Secret(format!(
                    "{} representatives for {} progressions",
                    reps.len(),
                    family.order()
                )));
            }
            for (j, &r) in reps.iter().enumerate() {
                if !family.progression(j).any(|x| x == r) {
                    return Err(ProtocolError::Secret(format!(
                        "representative {r} is not in progression {j}"
                    )));
                }
            }
        }
        Ok(Secret {
            family,
            oracle,
            representatives,
            bits,
        })
    }

    /// Plants `family` in `{1..2^q}`, adds noise and takes the largest entry
    /// of each progression as its representative. A's lowest-start rule then
    /// lands on B's starts even where noise extends a progression downwards.
    pub fn planted(
        family: ProgressionFamily,
        q: u32,
        noise: Option<&NoiseSpec>,
        with_representatives: bool,
        bits: Vec<u8>,
    ) -> Result<Self> {
        let clean = MarkedSet::from_progressions(&family, q)
            .map_err(|e| ProtocolError::Secret(e.to_string()))?;
        let oracle = match noise {
            Some(spec) => clean
                .apply_noise(spec)
                .map_err(|e| ProtocolError::Secret(e.to_string()))?,
            None => clean,
        };
        let reps = with_representatives.then(|| {
            (0..family.order())
                .map(|j| family.progression(j).max().expect("non-empty progression"))
                .collect()
        });
        Secret::new(family, oracle, reps, bits)
    }

    pub fn square(&self) -> Result<MagicSquare> {
        Ok(construct_order_n(&self.family)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// Measurements per detection round; ignored in exact mode.
    pub shots_per_round: u64,
    pub max_rounds: usize,
    /// Read the exact spectrum from each returned state instead of sampling.
    pub exact_spectrum: bool,
    pub peaks: usize,
    pub k_max: u64,
    pub seed: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            shots_per_round: 40,
            max_rounds: 5,
            exact_spectrum: false,
            peaks: 10,
            k_max: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub square: MagicSquare,
    pub family: ProgressionFamily,
    pub decoded: Vec<u8>,
    pub rounds: usize,
    pub used_autocorrelation: bool,
    pub transcript: Transcript,
}

#[derive(Debug, Serialize, Deserialize)]
struct Opening {
    n: usize,
    q: u32,
    representatives: Option<Vec<i64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Status {
    reconstructed: bool,
    #[serde(default)]
    instructions: usize,
}

/// B's side: answer oracle calls, then send the message.
fn run_b<C: Channel>(secret: &Secret, ch: &mut Recorded<C>, seed: u64) -> Result<()> {
    ch.send(&Frame::json(
        Tag::Representatives,
        &Opening {
            n: secret.family.order(),
            q: secret.oracle.q(),
            representatives: secret.representatives.clone(),
        },
    ))?;
    loop {
        let frame = ch.recv()?;
        match frame.tag {
            Tag::State => {
                let state = frame.parse_state()?;
                let reply = qsim::apply_phase_oracle(&state, &secret.oracle)?;
                ch.send(&Frame::state(Tag::OracleReply, &reply))?;
            }
            Tag::Ack => {
                let status: Status = frame.parse_json()?;
                if !status.reconstructed {
                    return Ok(());
                }
                let square = secret.square()?;
                let (k, d) = (secret.family.step(), family_spacing(&secret.family));
                let mut rng = rng::seeded(rng::derive_seed(seed, 0xb));
                for &bit in &secret.bits {
                    let ins = choose_instruction(&square, k, d, bit, &mut rng)?;
                    ch.send(&Frame::json(Tag::Instruction, &ins))?;
                }
                ch.send(&Frame::json(
                    Tag::Ack,
                    &Status {
                        reconstructed: true,
                        instructions: secret.bits.len(),
                    },
                ))?;
                return Ok(());
            }
            other => {
                return Err(ProtocolError::Unexpected {
                    got: other,
                    want: "STATE or ACK",
                })
            }
        }
    }
}

/// A random cell and a transform whose parity is `bit`.
fn choose_instruction(
    square: &MagicSquare,
    k: i64,
    d: i64,
    bit: u8,
    rng: &mut rng::SeededRng,
) -> Result<Instruction> {
    let n = square.order();
    let transforms = [Transform::Identity, Transform::AddK, Transform::AddD];
    let fits: Vec<Instruction> = (0..n)
        .flat_map(|row| (0..n).map(move |col| (row, col)))
        .flat_map(|(row, col)| {
            transforms.iter().map(move |&transform| Instruction {
                row,
                col,
                transform,
            })
        })
        .filter(|ins| encode_bit(square, ins, k, d).is_ok_and(|b| b == bit))
        .collect();
    fits.choose(rng)
        .copied()
        .ok_or(ProtocolError::Unencodable(bit))
}

/// Membership through the channel: send `|x⟩`, read the reply's sign.
struct ProbeOracle<'a, C> {
    ch: RefCell<&'a mut Recorded<C>>,
    q: u32,
    cache: RefCell<HashMap<i64, bool>>,
    failure: RefCell<Option<ProtocolError>>,
}

impl<C: Channel> ProbeOracle<'_, C> {
    fn probe(&self, x: i64) -> Result<bool> {
        let state = StateVector::basis(self.q, (x - 1) as usize)?;
        let mut ch = self.ch.borrow_mut();
        ch.send(&Frame::state(Tag::State, &state))?;
        let reply = expect(ch.recv()?, Tag::OracleReply, "ORACLE_REPLY")?.parse_state()?;
        Ok(reply.amplitudes()[(x - 1) as usize].re < 0.0)
    }

    fn take_failure(&self) -> Result<()> {
        match self.failure.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl<C: Channel> MembershipOracle for ProbeOracle<'_, C> {
    fn domain_size(&self) -> u64 {
        1 << self.q
    }

    fn query(&self, x: i64) -> bool {
        if x < 1 || x > self.domain_size() as i64 || self.failure.borrow().is_some() {
            return false;
        }
        if let Some(&hit) = self.cache.borrow().get(&x) {
            return hit;
        }
        match self.probe(x) {
            Ok(hit) => {
                self.cache.borrow_mut().insert(x, hit);
                hit
            }
            Err(e) => {
                *self.failure.borrow_mut() = Some(e);
                false
            }
        }
    }
}

fn expect(frame: Frame, tag: Tag, want: &'static str) -> Result<Frame> {
    if frame.tag == tag {
        Ok(frame)
    } else {
        Err(ProtocolError::Unexpected {
            got: frame.tag,
            want,
        })
    }
}

struct Reconstruction {
    family: ProgressionFamily,
    square: MagicSquare,
    rounds: usize,
    used_autocorrelation: bool,
}

/// A's side up to reconstruction. `Ok(None)` means the round budget ran out.
fn detect_a<C: Channel>(
    ch: &mut Recorded<C>,
    opening: &Opening,
    params: &ProtocolParams,
) -> Result<Option<Reconstruction>> {
    let q = opening.q;
    let uniform = qsim::uniform_state(q)?;
    let mut weights = vec![0.0; 1 << q];
    let mut rng = rng::seeded(rng::derive_seed(params.seed, 0xa));
    let oracle = ProbeOracle {
        ch: RefCell::new(ch),
        q,
        cache: RefCell::new(HashMap::new()),
        failure: RefCell::new(None),
    };
    let mut full_set: Option<MarkedSet> = None;
    for round in 1..=params.max_rounds {
        let exchanges = if params.exact_spectrum {
            1
        } else {
            params.shots_per_round
        };
        for _ in 0..exchanges {
            let mut ch = oracle.ch.borrow_mut();
            ch.send(&Frame::state(Tag::State, &uniform))?;
            let reply = expect(ch.recv()?, Tag::OracleReply, "ORACLE_REPLY")?.parse_state()?;
            let out = qsim::qft(&reply);
            if params.exact_spectrum {
                weights = out.probabilities();
            } else {
                weights[out.measure(&mut rng)] += 1.0;
            }
        }
        for cand in detect::period_candidates(&weights, params.peaks, params.k_max) {
            let k = cand.denominator as i64;
            let found = match &opening.representatives {
                Some(reps) => detect::reconstruct_with(&oracle, k, opening.n, Some(reps)),
                None => {
                    if full_set.is_none() {
                        let marked: Vec<u64> = (1..=oracle.domain_size())
                            .filter(|&x| oracle.query(x as i64))
                            .collect();
                        oracle.take_failure()?;
                        full_set =
                            Some(MarkedSet::from_indices(q, marked).expect("indices in range"));
                    }
                    let set = full_set.as_ref().expect("filled above");
                    let report = detect::algorithm2(set, k, opening.n, &Alg2Params::default())?;
                    report.family.zip(report.square)
                }
            };
            oracle.take_failure()?;
            if let Some((family, square)) = found {
                if detect::verify_square(&oracle, &square) {
                    oracle.take_failure()?;
                    return Ok(Some(Reconstruction {
                        family,
                        square,
                        rounds: round,
                        used_autocorrelation: opening.representatives.is_none(),
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn run_a<C: Channel>(
    ch: &mut Recorded<C>,
    params: &ProtocolParams,
    log: &Arc<Mutex<Transcript>>,
) -> Result<ProtocolOutcome> {
    let opening: Opening =
        expect(ch.recv()?, Tag::Representatives, "REPRESENTATIVES")?.parse_json()?;
    let Some(rec) = detect_a(ch, &opening, params)? else {
        ch.send(&Frame::json(
            Tag::Ack,
            &Status {
                reconstructed: false,
                instructions: 0,
            },
        ))?;
        return Err(ProtocolError::BudgetExhausted {
            rounds: params.max_rounds,
            transcript: log.lock().expect("transcript lock").clone(),
        });
    };
    ch.send(&Frame::json(
        Tag::Ack,
        &Status {
            reconstructed: true,
            instructions: 0,
        },
    ))?;
    let (k, d) = (rec.family.step(), family_spacing(&rec.family));
    let mut decoded = Vec::new();
    loop {
        let frame = ch.recv()?;
        match frame.tag {
            Tag::Instruction => {
                let ins: Instruction = frame.parse_json()?;
                decoded.push(decode_bit(&rec.square, &ins, k, d)?);
            }
            Tag::Ack => break,
            other => {
                return Err(ProtocolError::Unexpected {
                    got: other,
                    want: "INSTRUCTION or ACK",
                })
            }
        }
    }
    Ok(ProtocolOutcome {
        square: rec.square,
        family: rec.family,
        decoded,
        rounds: rec.rounds,
        used_autocorrelation: rec.used_autocorrelation,
        transcript: Transcript::default(),
    })
}

/// Runs both parties over an already connected pair of endpoints.
pub fn run_protocol_over<CA: Channel, CB: Channel>(
    secret: &Secret,
    a_end: CA,
    b_end: CB,
    params: &ProtocolParams,
) -> Result<ProtocolOutcome> {
    let log = Arc::new(Mutex::new(Transcript::default()));
    let mut a = Recorded {
        inner: a_end,
        party: Party::A,
        log: Arc::clone(&log),
    };
    let mut b = Recorded {
        inner: b_end,
        party: Party::B,
        log: Arc::clone(&log),
    };
    let (a_result, b_result) = std::thread::scope(|scope| {
        let seed = params.seed;
        // B owns its end so a failure on its side closes the channel
        let b_thread = scope.spawn(move || run_b(secret, &mut b, seed));
        let a_result = run_a(&mut a, params, &log);
        // unblock B if A stopped early
        drop(a);
        (a_result, b_thread.join().expect("party B panicked"))
    });
    let mut outcome = match (a_result, b_result) {
        // B's failure is the cause when A only saw the channel close
        (Err(ProtocolError::Closed), Err(e)) => return Err(e),
        (a, b) => {
            let out = a?;
            b?;
            out
        }
    };
    outcome.transcript = log.lock().expect("transcript lock").clone();
    Ok(outcome)
}

pub fn run_protocol(secret: &Secret, params: &ProtocolParams) -> Result<ProtocolOutcome> {
    let (a, b) = MemoryChannel::pair();
    run_protocol_over(secret, a, b, params)
}

/// Same protocol over a loopback TCP connection bound at `addr`.
pub fn run_protocol_tcp(
    secret: &Secret,
    params: &ProtocolParams,
    addr: SocketAddr,
) -> Result<ProtocolOutcome> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let a = TcpChannel::new(TcpStream::connect(local)?)?;
    let (stream, _) = listener.accept()?;
    let b = TcpChannel::new(stream)?;
    run_protocol_over(secret, a, b, params)
}
