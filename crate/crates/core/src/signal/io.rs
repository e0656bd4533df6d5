//! Binary waveform dumps: interleaved little-endian f64 `(Ix, Qx, Iy, Qy)` per
//! sample, plus a JSON sidecar holding the sample rate, center frequency and seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DualPolBlock;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformMeta {
    pub sample_rate: f64,
    pub center_frequency_hz: f64,
    pub seed: u64,
    pub samples: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_waveform(path: &Path, block: &DualPolBlock, seed: u64) -> Result<()> {
    let mut bytes = Vec::with_capacity(block.len() * 32);
    for (x, y) in block.x().iter().zip(block.y()) {
        for v in [x.re, x.im, y.re, y.im] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = WaveformMeta {
        sample_rate: block.sample_rate(),
        center_frequency_hz: block.center_shift(),
        seed,
        samples: block.len(),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(side, e))
}

pub fn read_waveform(path: &Path) -> Result<(DualPolBlock, WaveformMeta)> {
    let side = sidecar_path(path);
    let meta: WaveformMeta =
        serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.samples * 32 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, metadata promises {} samples",
            path.display(),
            bytes.len(),
            meta.samples
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let (mut x, mut y) = (Vec::with_capacity(meta.samples), Vec::with_capacity(meta.samples));
    for q in vals.chunks_exact(4) {
        x.push(C64::new(q[0], q[1]));
        y.push(C64::new(q[2], q[3]));
    }
    let block = DualPolBlock::new(x, y, meta.sample_rate)?.with_center_shift(meta.center_frequency_hz);
    Ok((block, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wave.bin");
        let x: Vec<C64> = (0..8).map(|i| C64::new(i as f64 * 0.1, -1.0 / (i as f64 + 3.0))).collect();
        let y: Vec<C64> = x.iter().map(|v| v.conj() * 1e-3).collect();
        let block = DualPolBlock::new(x, y, 256e9).unwrap().with_center_shift(37.5e9);
        write_waveform(&path, &block, 42).unwrap();
        let (back, meta) = read_waveform(&path).unwrap();
        assert_eq!(back, block);
        assert_eq!(meta.seed, 42);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 * 32);
    }
}
