//! Tagged little-endian policy checkpoints.
//!
//! Layout: `b"RRPC"`, version `u8`, kind `u8`, then a kind-specific body.
//! Matrices are row-major `f64`; the RNG is stored as its 32-byte seed,
//! stream `u64` and word position `u128`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{BanditError, GtsState, LinUcbState, PolicyKind, TsLinearState};

const MAGIC: &[u8; 4] = b"RRPC";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("truncated checkpoint")]
    Truncated,
    #[error("bad checkpoint: {0}")]
    Invalid(String),
    #[error(transparent)]
    State(#[from] BanditError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(kind: PolicyKind) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(MAGIC);
        w.buf.push(VERSION);
        w.buf.push(kind_tag(kind));
        w
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64s<'a, I: IntoIterator<Item = &'a f64>>(&mut self, vals: I) {
        for v in vals {
            self.f64(*v);
        }
    }

    pub(crate) fn rng(&mut self, rng: &ChaCha8Rng) {
        let s = RngState::capture(rng);
        self.buf.extend_from_slice(&s.seed);
        self.buf.extend_from_slice(&s.stream.to_le_bytes());
        self.buf.extend_from_slice(&s.word_pos.to_le_bytes());
    }

    pub(crate) fn matrix(&mut self, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }

    pub(crate) fn linucb(&mut self, s: &LinUcbState) {
        self.u32(s.dim() as u32);
        self.f64(s.alpha());
        self.matrix(s.a());
        self.f64s(s.b().iter());
    }

    pub(crate) fn ts(&mut self, s: &TsLinearState) {
        self.u32(s.dim() as u32);
        self.f64(s.v());
        self.matrix(s.b());
        self.f64s(s.f().iter());
    }

    pub(crate) fn gts(&mut self, s: &GtsState) {
        self.u32(s.weights().len() as u32);
        self.f64(s.gamma());
        self.f64(s.eta());
        self.f64s(s.weights());
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn dim(&mut self) -> Result<usize, CheckpointError> {
        let d = self.u32()? as usize;
        if d == 0 || d > 4096 {
            return Err(CheckpointError::Invalid(format!("dimension {d}")));
        }
        Ok(d)
    }

    fn rng(&mut self) -> Result<ChaCha8Rng, CheckpointError> {
        let seed: [u8; 32] = self.take(32)?.try_into().expect("32 bytes");
        let stream = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        let word_pos = u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes"));
        Ok(RngState { seed, stream, word_pos }.restore())
    }

    fn matrix(&mut self, d: usize) -> Result<DMatrix<f64>, CheckpointError> {
        Ok(DMatrix::from_row_slice(d, d, &self.f64s(d * d)?))
    }

    fn linucb(&mut self) -> Result<LinUcbState, CheckpointError> {
        let d = self.dim()?;
        let alpha = self.f64()?;
        let a = self.matrix(d)?;
        let b = DVector::from_vec(self.f64s(d)?);
        Ok(LinUcbState::from_parts(a, b, alpha)?)
    }

    fn ts(&mut self) -> Result<TsLinearState, CheckpointError> {
        let d = self.dim()?;
        let v = self.f64()?;
        let b = self.matrix(d)?;
        let f = DVector::from_vec(self.f64s(d)?);
        Ok(TsLinearState::from_parts(b, f, v)?)
    }

    fn gts(&mut self) -> Result<GtsState, CheckpointError> {
        let n = self.dim()?;
        let gamma = self.f64()?;
        let eta = self.f64()?;
        let w = self.f64s(n)?;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CheckpointError::Invalid("negative or non-finite weight".into()));
        }
        Ok(GtsState::with_weights(w, gamma, eta))
    }
}

fn kind_tag(kind: PolicyKind) -> u8 {
    match kind {
        PolicyKind::Default => 0,
        PolicyKind::Random => 1,
        PolicyKind::LinUcb => 2,
        PolicyKind::TsLinear => 3,
        PolicyKind::Gts => 4,
        PolicyKind::GtsTs => 5,
    }
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Default,
    Random(ChaCha8Rng),
    LinUcb(LinUcbState),
    TsLinear(TsLinearState, ChaCha8Rng),
    Gts {
        state: GtsState,
        ts: Option<TsLinearState>,
        rng: ChaCha8Rng,
    },
}

impl Checkpoint {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Checkpoint::Default => PolicyKind::Default,
            Checkpoint::Random(_) => PolicyKind::Random,
            Checkpoint::LinUcb(_) => PolicyKind::LinUcb,
            Checkpoint::TsLinear(..) => PolicyKind::TsLinear,
            Checkpoint::Gts { ts: None, .. } => PolicyKind::Gts,
            Checkpoint::Gts { ts: Some(_), .. } => PolicyKind::GtsTs,
        }
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Invalid("wrong magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CheckpointError::Invalid(format!("version {version}")));
    }
    let cp = match r.u8()? {
        0 => Checkpoint::Default,
        1 => Checkpoint::Random(r.rng()?),
        2 => Checkpoint::LinUcb(r.linucb()?),
        3 => {
            let ts = r.ts()?;
            Checkpoint::TsLinear(ts, r.rng()?)
        }
        tag @ (4 | 5) => {
            let state = r.gts()?;
            let rng = r.rng()?;
            let ts = if r.u8()? == 1 { Some(r.ts()?) } else { None };
            if (tag == 5) != ts.is_some() {
                return Err(CheckpointError::Invalid("kind tag disagrees with body".into()));
            }
            Checkpoint::Gts { state, ts, rng }
        }
        t => return Err(CheckpointError::Invalid(format!("unknown policy tag {t}"))),
    };
    if !r.buf.is_empty() {
        return Err(CheckpointError::Invalid("trailing bytes".into()));
    }
    Ok(cp)
}
