//! Binary model checkpoints and residual datasets.

use std::io::{self, Read, Write};

use issl_core::detect::ResidualSample;
use issl_core::model::{ModelArch, ModelParams};
use issl_core::{SpatialSpectrum, AZIMUTH_BINS};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ISSLMDL1";
pub const RESIDUALS_MAGIC: &[u8; 8] = b"ISSLRSD1";

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> io::Result<()> {
    if &read_array::<8>(r)? != magic {
        return Err(bad(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

/// Magic, u32 LE length + JSON architecture, u64 LE count, f32 LE parameters.
pub fn write_checkpoint(mut w: impl Write, params: &ModelParams) -> io::Result<()> {
    let arch = serde_json::to_vec(&params.arch).map_err(io::Error::other)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(arch.len() as u32).to_le_bytes())?;
    w.write_all(&arch)?;
    w.write_all(&(params.values.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(4 * params.values.len());
    for &v in &params.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_checkpoint(mut r: impl Read) -> io::Result<ModelParams> {
    expect_magic(&mut r, CHECKPOINT_MAGIC)?;
    let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut arch = vec![0u8; len];
    r.read_exact(&mut arch)?;
    let arch: ModelArch =
        serde_json::from_slice(&arch).map_err(|e| bad(format!("architecture: {e}")))?;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != 4 * count {
        return Err(bad(format!(
            "expected {count} parameters, found {} bytes",
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    ModelParams::new(arch, values).map_err(|e| bad(e.to_string()))
}

fn write_spectrum(buf: &mut Vec<u8>, s: &SpatialSpectrum) {
    for &v in s.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_spectrum(r: &mut impl Read) -> io::Result<SpatialSpectrum> {
    let mut raw = vec![0u8; 4 * AZIMUTH_BINS];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    SpatialSpectrum::new(values).map_err(|e| bad(e.to_string()))
}

/// Magic, u32 LE count, then per record 360 f32 LE values and one label byte.
pub fn write_residuals(mut w: impl Write, samples: &[ResidualSample]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(12 + samples.len() * (4 * AZIMUTH_BINS + 1));
    buf.extend_from_slice(RESIDUALS_MAGIC);
    buf.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        write_spectrum(&mut buf, &s.spectrum);
        buf.push(s.label);
    }
    w.write_all(&buf)
}

pub fn read_residuals(mut r: impl Read) -> io::Result<Vec<ResidualSample>> {
    expect_magic(&mut r, RESIDUALS_MAGIC)?;
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let spectrum = read_spectrum(&mut r)?;
        let [label] = read_array::<1>(&mut r)?;
        if label > 1 {
            return Err(bad(format!("label byte {label} is not 0 or 1")));
        }
        out.push(ResidualSample { spectrum, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use issl_core::detect::DetectorNetConfig;
    use issl_core::spectrum::encode;
    use issl_core::DoaSet;

    #[test]
    fn checkpoint_layout() {
        let arch = DetectorNetConfig::default().arch();
        let values = arch.network().unwrap().init_params(1);
        let p = ModelParams::new(ModelArch::Detector(arch), values).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let json: serde_json::Value = serde_json::from_slice(&buf[12..12 + len]).unwrap();
        assert_eq!(json["kind"], "detector");
        let count = u64::from_le_bytes(buf[12 + len..20 + len].try_into().unwrap()) as usize;
        assert_eq!(count, p.values.len());
        assert_eq!(buf.len(), 20 + len + 4 * count);

        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.arch, p.arch);
        for (a, b) in back.values.iter().zip(&p.values) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn residuals_layout() {
        let s = vec![
            ResidualSample {
                spectrum: encode(&DoaSet::from_azimuths(&[5]).unwrap(), 8.0),
                label: 0,
            },
            ResidualSample {
                spectrum: SpatialSpectrum::zeros(),
                label: 1,
            },
        ];
        let mut buf = Vec::new();
        write_residuals(&mut buf, &s).unwrap();
        assert_eq!(buf.len(), 12 + 2 * 1441);
        assert_eq!(buf[12 + 1440], 0);
        assert_eq!(buf[12 + 2 * 1441 - 1], 1);
        let back = read_residuals(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], s[1]);
        assert_eq!(back[0].spectrum.get(5), 1.0);
    }
}
