//! Binary checkpoints: magic `TGCKPT1`, a header of little-endian u64 fields
//! (action dim, lidar length, blind flag, iteration, env steps), the layout
//! map (sub-network count, then each network's layer sizes), the f64
//! parameters, the Adam step count and moments, and a u64 RNG state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::Adam;
use super::policy::{PolicyArch, PolicyNet};
use super::NetError;
use crate::env::{ObsLayout, PROPRIO_DIM};
use crate::pmtg::TG_STATE_DIM;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"TGCKPT1";
const MAX_LEN: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub action_dim: usize,
    pub lidar_len: usize,
    pub blind: bool,
    pub iteration: u64,
    pub env_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub layout_map: Vec<Vec<usize>>,
    pub params: Vec<f64>,
    pub adam: Adam,
    pub rng_state: u64,
}

fn put(out: &mut impl Write, v: u64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn put_f64s(out: &mut impl Write, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get(input: &mut impl Read) -> Result<u64, NetError> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_len(input: &mut impl Read, what: &str) -> Result<usize, NetError> {
    let n = get(input)?;
    if n > MAX_LEN {
        return Err(NetError::Checkpoint(format!("implausible {what} {n}")));
    }
    Ok(n as usize)
}

fn get_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>, NetError> {
    let mut bytes = vec![0u8; n * 8];
    input.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Checkpoint {
    pub fn new(net: &PolicyNet, params: Vec<f64>, adam: Adam, rng_state: u64, iteration: u64, env_steps: u64) -> Self {
        Self {
            header: CheckpointHeader {
                action_dim: net.layout.action_dim,
                lidar_len: net.layout.lidar_len,
                blind: net.blind,
                iteration,
                env_steps,
            },
            layout_map: net.layout_map(),
            params,
            adam,
            rng_state,
        }
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        let h = &self.header;
        for v in [h.action_dim as u64, h.lidar_len as u64, h.blind as u64, h.iteration, h.env_steps] {
            put(&mut out, v)?;
        }
        put(&mut out, self.layout_map.len() as u64)?;
        for sizes in &self.layout_map {
            put(&mut out, sizes.len() as u64)?;
            for &s in sizes {
                put(&mut out, s as u64)?;
            }
        }
        put(&mut out, self.params.len() as u64)?;
        put_f64s(&mut out, &self.params)?;
        put(&mut out, self.adam.t)?;
        put_f64s(&mut out, &self.adam.m)?;
        put_f64s(&mut out, &self.adam.v)?;
        put(&mut out, self.rng_state)?;
        out.flush()
    }

    pub fn read(mut input: impl Read) -> Result<Self, NetError> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NetError::Checkpoint("bad magic".into()));
        }
        let action_dim = get_len(&mut input, "action dim")?;
        let lidar_len = get_len(&mut input, "lidar length")?;
        let blind = match get(&mut input)? {
            0 => false,
            1 => true,
            v => return Err(NetError::Checkpoint(format!("blind flag {v}"))),
        };
        let iteration = get(&mut input)?;
        let env_steps = get(&mut input)?;
        let n_nets = get_len(&mut input, "network count")?;
        let mut layout_map = Vec::with_capacity(n_nets.min(8));
        for _ in 0..n_nets {
            let n = get_len(&mut input, "layer count")?;
            let sizes = (0..n).map(|_| get_len(&mut input, "layer size")).collect::<Result<Vec<_>, _>>()?;
            layout_map.push(sizes);
        }
        let n = get_len(&mut input, "parameter count")?;
        let params = get_f64s(&mut input, n)?;
        let t = get(&mut input)?;
        let m = get_f64s(&mut input, n)?;
        let v = get_f64s(&mut input, n)?;
        let rng_state = get(&mut input)?;
        let ckpt = Self {
            header: CheckpointHeader { action_dim, lidar_len, blind, iteration, env_steps },
            layout_map,
            params,
            adam: Adam { m, v, t },
            rng_state,
        };
        let net = ckpt.net()?;
        if net.num_params() != ckpt.params.len() {
            return Err(NetError::ParamCount { expected: net.num_params(), got: ckpt.params.len() });
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        Ok(self.write(BufWriter::new(File::create(path)?))?)
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn obs_layout(&self) -> ObsLayout {
        ObsLayout { action_dim: self.header.action_dim, lidar_len: self.header.lidar_len }
    }

    /// Rebuilds the network described by the header and layout map.
    pub fn net(&self) -> Result<PolicyNet, NetError> {
        let bad = || NetError::Checkpoint(format!("layout map {:?} does not fit the header", self.layout_map));
        let expected = if self.header.blind { 3 } else { 4 };
        if self.layout_map.len() != expected || self.layout_map.iter().any(|s| s.len() < 2) {
            return Err(bad());
        }
        let mut maps = self.layout_map.iter();
        let lidar_encoder = if self.header.blind { vec![4] } else { maps.next().unwrap()[1..].to_vec() };
        let proprio = maps.next().unwrap();
        let trunk = maps.next().unwrap();
        let value = maps.next().unwrap();
        let arch = PolicyArch {
            lidar_encoder,
            proprio_encoder: proprio[1..].to_vec(),
            trunk: trunk[1..trunk.len() - 1].to_vec(),
            value: value[1..value.len() - 1].to_vec(),
        };
        if proprio[0] != self.header.action_dim + PROPRIO_DIM + TG_STATE_DIM {
            return Err(bad());
        }
        let net = PolicyNet::new(self.obs_layout(), &arch, self.header.blind)?;
        if net.layout_map() != self.layout_map {
            return Err(bad());
        }
        Ok(net)
    }
}
