//! Split-transaction DRAM model.
//!
//! A flat sparse byte image plus a timing model: requests are interleaved over
//! `stacks x channels` at 64-byte granularity, each channel serves its requests in
//! arrival order and is occupied for `bytes / channel_bytes_per_cycle` cycles per
//! request, and the response completes a fixed latency after service ends. An optional
//! per-accelerator port cap paces requests before they reach the channels.
//!
//! Sub-cycle occupancy is tracked in milli-cycles so fractional pacing (2.23 cycles for a
//! 64-byte request at 28.75 B/cycle) accumulates without rounding drift.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::MemKind;

/// Interleave granularity and the largest request size.
pub const LINE_BYTES: u64 = 64;
const PAGE_BYTES: u64 = 4096;
const MILLI: u64 = 1000;
const CHECKPOINT_MAGIC: &[u8; 8] = b"UPDRAM01";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("address {addr:#x} is not 8-byte aligned")]
    Misaligned { addr: u64 },
    #[error("request at {addr:#x} of {nwords} words crosses a 64-byte interleave boundary")]
    CrossesBoundary { addr: u64, nwords: usize },
    #[error("request size {nwords} words outside 1..=8")]
    BadSize { nwords: usize },
    #[error("address range {addr:#x}+{len} outside the {size:#x}-byte address space")]
    OutOfRange { addr: u64, len: u64, size: u64 },
    #[error("host access during simulation")]
    HostDuringSimulation,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// Timing parameters of the DRAM model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemTiming {
    /// Fixed service latency added after a request's channel occupancy ends.
    pub latency_cycles: u64,
    pub channel_bytes_per_cycle: f64,
    pub stacks: usize,
    pub channels_per_stack: usize,
    /// Per-accelerator port cap in bytes/cycle; `0` disables the cap.
    pub port_bytes_per_cycle: f64,
    /// Size of the byte-addressable space.
    pub address_space: u64,
}

impl Default for MemTiming {
    fn default() -> Self {
        Self {
            latency_cycles: 200,
            channel_bytes_per_cycle: 28.75,
            stacks: 8,
            channels_per_stack: 8,
            port_bytes_per_cycle: 230.0,
            address_space: 16 << 30,
        }
    }
}

impl MemTiming {
    pub fn channels(&self) -> usize {
        self.stacks * self.channels_per_stack
    }

    /// Maps an address to `(stack, channel)`: consecutive 64-byte lines walk the channels
    /// of stack 0 first, then stack 1, and so on.
    pub fn interleave(&self, addr: u64) -> (usize, usize) {
        let idx = ((addr / LINE_BYTES) % self.channels() as u64) as usize;
        (idx / self.channels_per_stack, idx % self.channels_per_stack)
    }

    fn milli_cost(bytes: u64, bytes_per_cycle: f64) -> u64 {
        if bytes_per_cycle <= 0.0 {
            return 0;
        }
        (bytes as f64 * MILLI as f64 / bytes_per_cycle).ceil() as u64
    }
}

/// Sparse byte store; never-written bytes read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DramImage {
    pages: BTreeMap<u64, Box<[u8]>>,
    size: u64,
}

impl DramImage {
    pub fn new(size: u64) -> Self {
        Self { pages: BTreeMap::new(), size }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    fn check(&self, addr: u64, len: u64) -> Result<(), MemError> {
        match addr.checked_add(len) {
            Some(end) if end <= self.size => Ok(()),
            _ => Err(MemError::OutOfRange { addr, len, size: self.size }),
        }
    }

    pub fn write_bytes(&mut self, addr: u64, bytes: &[u8]) -> Result<(), MemError> {
        self.check(addr, bytes.len() as u64)?;
        let mut a = addr;
        let mut rest = bytes;
        while !rest.is_empty() {
            let page = a / PAGE_BYTES;
            let off = (a % PAGE_BYTES) as usize;
            let n = rest.len().min(PAGE_BYTES as usize - off);
            let buf = self.pages.entry(page).or_insert_with(|| vec![0u8; PAGE_BYTES as usize].into_boxed_slice());
            buf[off..off + n].copy_from_slice(&rest[..n]);
            rest = &rest[n..];
            a += n as u64;
        }
        Ok(())
    }

    pub fn read_bytes(&self, addr: u64, len: u64) -> Result<Vec<u8>, MemError> {
        self.check(addr, len)?;
        let mut out = vec![0u8; len as usize];
        let mut a = addr;
        let mut done = 0usize;
        while done < out.len() {
            let page = a / PAGE_BYTES;
            let off = (a % PAGE_BYTES) as usize;
            let n = (out.len() - done).min(PAGE_BYTES as usize - off);
            if let Some(buf) = self.pages.get(&page) {
                out[done..done + n].copy_from_slice(&buf[off..off + n]);
            }
            done += n;
            a += n as u64;
        }
        Ok(out)
    }

    pub fn write_words(&mut self, addr: u64, words: &[u64]) -> Result<(), MemError> {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        self.write_bytes(addr, &bytes)
    }

    pub fn read_words(&self, addr: u64, n: usize) -> Result<Vec<u64>, MemError> {
        let bytes = self.read_bytes(addr, n as u64 * 8)?;
        Ok(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn read_word(&self, addr: u64) -> Result<u64, MemError> {
        Ok(self.read_words(addr, 1)?[0])
    }

    /// Dumps every touched page as `(offset, length, bytes)` regions, merging adjacent pages.
    ///
    /// Layout: magic `UPDRAM01`, address-space size (u64 LE), region count (u64 LE), then per
    /// region offset (u64 LE), length (u64 LE) and the raw bytes.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut regions: Vec<(u64, Vec<u8>)> = Vec::new();
        for (&page, buf) in &self.pages {
            let start = page * PAGE_BYTES;
            match regions.last_mut() {
                Some((off, bytes)) if *off + bytes.len() as u64 == start => bytes.extend_from_slice(buf),
                _ => regions.push((start, buf.to_vec())),
            }
        }
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.size.to_le_bytes())?;
        w.write_all(&(regions.len() as u64).to_le_bytes())?;
        for (off, bytes) in &regions {
            w.write_all(&off.to_le_bytes())?;
            w.write_all(&(bytes.len() as u64).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, MemError> {
        let bad = |e: io::Error| MemError::Checkpoint(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(MemError::Checkpoint("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64, MemError> {
            r.read_exact(&mut word).map_err(bad)?;
            Ok(u64::from_le_bytes(word))
        };
        let size = next(&mut r)?;
        let count = next(&mut r)?;
        let mut image = DramImage::new(size);
        for _ in 0..count {
            let off = next(&mut r)?;
            let len = next(&mut r)?;
            let mut bytes = vec![0u8; len as usize];
            r.read_exact(&mut bytes).map_err(bad)?;
            image.write_bytes(off, &bytes)?;
        }
        Ok(image)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemRequest {
    pub req_id: u64,
    pub addr: u64,
    pub nwords: usize,
    pub kind: MemKind,
    /// Data to write (WRITE only).
    pub payload: Vec<u64>,
    /// Raw continuation event word.
    pub continuation: u64,
    pub issue_cycle: u64,
    pub src_lane: u32,
}

impl MemRequest {
    pub fn bytes(&self) -> u64 {
        self.nwords as u64 * 8
    }

    pub fn check(&self) -> Result<(), MemError> {
        if !(1..=8).contains(&self.nwords) {
            return Err(MemError::BadSize { nwords: self.nwords });
        }
        if self.addr % 8 != 0 {
            return Err(MemError::Misaligned { addr: self.addr });
        }
        if self.addr / LINE_BYTES != (self.addr + self.bytes() - 1) / LINE_BYTES {
            return Err(MemError::CrossesBoundary { addr: self.addr, nwords: self.nwords });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemResponse {
    pub req_id: u64,
    pub addr: u64,
    pub kind: MemKind,
    /// Read data; empty for a write ack.
    pub payload: Vec<u64>,
    pub continuation: u64,
    pub issue_cycle: u64,
    pub complete_cycle: u64,
    pub src_lane: u32,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelState {
    pub stack: usize,
    pub channel: usize,
    /// Milli-cycle at which the channel finishes its last accepted request.
    pub next_free: u64,
    pub bytes_served: u64,
    pub requests: u64,
}

/// Completion record ordered by `(complete_cycle, req_id)`.
#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    complete_cycle: u64,
    req_id: u64,
    resp: MemResponseBox,
}

#[derive(Debug, PartialEq, Eq)]
struct MemResponseBox(Box<MemResponse>);

impl PartialOrd for MemResponseBox {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MemResponseBox {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

/// The DRAM of one node: image, channels and per-accelerator ports.
#[derive(Debug)]
pub struct Memory {
    pub timing: MemTiming,
    image: DramImage,
    channels: Vec<ChannelState>,
    ports: Vec<u64>,
    pending: BinaryHeap<Reverse<Pending>>,
    in_simulation: bool,
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub requests: u64,
    pub latency_sum: u64,
}

impl Memory {
    pub fn new(timing: MemTiming, image: DramImage, accelerators: usize) -> Self {
        let channels = (0..timing.channels())
            .map(|i| ChannelState {
                stack: i / timing.channels_per_stack,
                channel: i % timing.channels_per_stack,
                ..Default::default()
            })
            .collect();
        Self {
            timing,
            image,
            channels,
            ports: vec![0; accelerators.max(1)],
            pending: BinaryHeap::new(),
            in_simulation: false,
            read_bytes: 0,
            write_bytes: 0,
            requests: 0,
            latency_sum: 0,
        }
    }

    pub fn image(&self) -> &DramImage {
        &self.image
    }

    pub fn into_image(self) -> DramImage {
        self.image
    }

    pub fn channels(&self) -> &[ChannelState] {
        &self.channels
    }

    pub fn set_in_simulation(&mut self, on: bool) {
        self.in_simulation = on;
    }

    pub fn outstanding(&self) -> usize {
        self.pending.len()
    }

    /// Earliest cycle at which some outstanding request completes.
    pub fn next_completion(&self) -> Option<u64> {
        self.pending.peek().map(|Reverse(p)| p.complete_cycle)
    }

    pub fn host_write(&mut self, addr: u64, bytes: &[u8]) -> Result<(), MemError> {
        if self.in_simulation {
            return Err(MemError::HostDuringSimulation);
        }
        self.image.write_bytes(addr, bytes)
    }

    pub fn host_read(&self, addr: u64, len: u64) -> Result<Vec<u8>, MemError> {
        if self.in_simulation {
            return Err(MemError::HostDuringSimulation);
        }
        self.image.read_bytes(addr, len)
    }

    /// Accepts a request issued at `cycle` by a lane of accelerator `accel`.
    ///
    /// The whole service schedule is fixed at submission: the port, then the channel, are
    /// FIFO, so the completion time and the data a read observes are known immediately.
    pub fn submit(&mut self, req: MemRequest, cycle: u64, accel: usize) -> Result<(), MemError> {
        req.check()?;
        self.image.check(req.addr, req.bytes())?;
        let bytes = req.bytes();

        let port_idx = accel.min(self.ports.len() - 1);
        let port = &mut self.ports[port_idx];
        let leave = (cycle * MILLI).max(*port);
        *port = leave + MemTiming::milli_cost(bytes, self.timing.port_bytes_per_cycle);

        let (stack, ch) = self.timing.interleave(req.addr);
        let chan = &mut self.channels[stack * self.timing.channels_per_stack + ch];
        let begin = leave.max(chan.next_free);
        let done = begin + MemTiming::milli_cost(bytes, self.timing.channel_bytes_per_cycle);
        chan.next_free = done;
        chan.bytes_served += bytes;
        chan.requests += 1;
        let complete_cycle = done.div_ceil(MILLI) + self.timing.latency_cycles;

        let payload = match req.kind {
            MemKind::Read => {
                self.read_bytes += bytes;
                self.image.read_words(req.addr, req.nwords)?
            }
            MemKind::Write => {
                self.write_bytes += bytes;
                self.image.write_words(req.addr, &req.payload[..req.nwords])?;
                Vec::new()
            }
        };
        self.requests += 1;
        self.latency_sum += complete_cycle - cycle;
        let resp = MemResponse {
            req_id: req.req_id,
            addr: req.addr,
            kind: req.kind,
            payload,
            continuation: req.continuation,
            issue_cycle: cycle,
            complete_cycle,
            src_lane: req.src_lane,
            bytes,
        };
        self.pending.push(Reverse(Pending {
            complete_cycle,
            req_id: req.req_id,
            resp: MemResponseBox(Box::new(resp)),
        }));
        Ok(())
    }

    /// Returns every response completing at or before `cycle`, ordered by `(complete_cycle, req_id)`.
    pub fn tick(&mut self, cycle: u64) -> Vec<MemResponse> {
        let mut out = Vec::new();
        while let Some(Reverse(p)) = self.pending.peek() {
            if p.complete_cycle > cycle {
                break;
            }
            let Reverse(p) = self.pending.pop().unwrap();
            out.push(*p.resp.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(id: u64, addr: u64, n: usize) -> MemRequest {
        MemRequest {
            req_id: id,
            addr,
            nwords: n,
            kind: MemKind::Read,
            payload: vec![],
            continuation: 0,
            issue_cycle: 0,
            src_lane: 0,
        }
    }

    fn mem() -> Memory {
        Memory::new(MemTiming::default(), DramImage::new(1 << 30), 1)
    }

    #[test]
    fn interleave_sequence() {
        let t = MemTiming::default();
        assert_eq!(t.interleave(0), (0, 0));
        assert_eq!(t.interleave(8), (0, 0));
        assert_eq!(t.interleave(64), (0, 1));
        assert_eq!(t.interleave(64 * 8), (1, 0));
        assert_eq!(t.interleave(64 * 64), (0, 0));
    }

    #[test]
    fn single_read_latency() {
        let mut m = mem();
        m.submit(read(0, 0, 8), 10, 0).unwrap();
        assert!(m.tick(212).is_empty());
        let r = m.tick(213);
        assert_eq!(r.len(), 1);
        // 200 cycles of latency plus ceil(2.23) cycles of channel occupancy
        assert_eq!(r[0].complete_cycle, 213);
    }

    #[test]
    fn back_to_back_reads_are_pacing_limited() {
        let mut m = mem();
        for i in 0..100 {
            m.submit(read(i, 0, 8), 0, 0).unwrap();
        }
        let all = m.tick(10_000);
        assert_eq!(all.len(), 100);
        let span = all[99].complete_cycle - all[0].complete_cycle;
        // 99 gaps of 64 / 28.75 = 2.226 cycles
        assert!((span as f64 - 99.0 * 64.0 / 28.75).abs() <= 1.0, "{span}");
        assert!(all.windows(2).all(|w| (w[0].complete_cycle, w[0].req_id) < (w[1].complete_cycle, w[1].req_id)));
    }

    #[test]
    fn write_then_read_same_address() {
        let mut m = mem();
        let mut w = read(0, 0x40, 2);
        w.kind = MemKind::Write;
        w.payload = vec![7, 9];
        m.submit(w, 0, 0).unwrap();
        m.submit(read(1, 0x40, 2), 0, 0).unwrap();
        let r = m.tick(1000);
        assert!(r[0].payload.is_empty());
        assert_eq!(r[1].payload, vec![7, 9]);
    }

    #[test]
    fn malformed_requests() {
        let mut m = mem();
        assert_eq!(m.submit(read(0, 4, 1), 0, 0), Err(MemError::Misaligned { addr: 4 }));
        assert!(matches!(m.submit(read(0, 56, 2), 0, 0), Err(MemError::CrossesBoundary { .. })));
        assert!(matches!(m.submit(read(0, 0, 9), 0, 0), Err(MemError::BadSize { nwords: 9 })));
        assert!(matches!(m.submit(read(0, 1 << 30, 1), 0, 0), Err(MemError::OutOfRange { .. })));
    }

    #[test]
    fn host_access_phase_rule() {
        let mut m = mem();
        m.host_write(0x1000, &[1, 2, 3]).unwrap();
        assert_eq!(m.host_read(0x1000, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(m.host_read(0x9000, 4).unwrap(), vec![0; 4]);
        m.set_in_simulation(true);
        assert_eq!(m.host_write(0, &[1]), Err(MemError::HostDuringSimulation));
    }

    #[test]
    fn host_words() {
        let mut img = DramImage::new(1 << 20);
        img.write_words(0x1000, &[1, 2, 3]).unwrap();
        assert_eq!(img.read_words(0x1000, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(img.read_words(0x8000, 2).unwrap(), vec![0, 0]);
        assert!(img.write_words((1 << 20) - 8, &[1, 2]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut img = DramImage::new(1 << 24);
        img.write_words(0x10, &[5, 6]).unwrap();
        img.write_words(0x1ff8, &[u64::MAX, 3]).unwrap();
        img.write_words(0x80_0000, &[42]).unwrap();
        let mut buf = Vec::new();
        img.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"UPDRAM01");
        let back = DramImage::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn stack_bandwidth_never_exceeds_cap() {
        // Saturate every channel of one stack and check bytes served per 10k-cycle window.
        let mut m = Memory::new(MemTiming { port_bytes_per_cycle: 0.0, ..Default::default() }, DramImage::new(1 << 30), 1);
        let mut id = 0;
        for rep in 0..2000u64 {
            for ch in 0..8u64 {
                m.submit(read(id, (rep * 64 + ch) * 64, 8), 0, 0).unwrap();
                id += 1;
            }
        }
        let resp = m.tick(u64::MAX);
        let cap = 460e9 / 2e9; // bytes per cycle per stack
        let first = resp[0].complete_cycle;
        let last = resp.last().unwrap().complete_cycle;
        let mut start = first;
        while start + 10_000 <= last {
            let bytes: u64 = resp
                .iter()
                .filter(|r| r.complete_cycle >= start && r.complete_cycle < start + 10_000)
                .map(|r| r.bytes)
                .sum();
            assert!(bytes as f64 / 10_000.0 <= cap * 1.001, "{bytes}");
            start += 1000;
        }
    }
}
