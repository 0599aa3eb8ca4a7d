//! Minimal RIFF/WAVE IO for 32-bit IEEE float audio (format tag 3).

use std::io::{self, Read, Write};

const FORMAT_FLOAT: u16 = 3;

/// Writes interleaved float32 samples. All channels must share one length.
pub fn write_f32<W: Write>(mut w: W, channels: &[Vec<f32>], sample_rate: u32) -> io::Result<()> {
    let n_ch = channels.len();
    let frames = channels.first().map_or(0, Vec::len);
    if n_ch == 0 || channels.iter().any(|c| c.len() != frames) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "channels must be non-empty and equally long",
        ));
    }
    let block = 4 * n_ch as u32;
    let data_len = block * frames as u32;
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&FORMAT_FLOAT.to_le_bytes())?;
    w.write_all(&(n_ch as u16).to_le_bytes())?;
    w.write_all(&sample_rate.to_le_bytes())?;
    w.write_all(&(sample_rate * block).to_le_bytes())?;
    w.write_all(&(block as u16).to_le_bytes())?;
    w.write_all(&32u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    let mut buf = Vec::with_capacity(data_len as usize);
    for i in 0..frames {
        for c in channels {
            buf.extend_from_slice(&c[i].to_le_bytes());
        }
    }
    w.write_all(&buf)
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Reads a float32 WAV into per-channel buffers plus its sample rate.
pub fn read_f32<R: Read>(mut r: R) -> io::Result<(Vec<Vec<f32>>, u32)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let u16_at = |b: &[u8], i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
    let u32_at = |b: &[u8], i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    let mut pos = 12;
    let mut format: Option<(u16, u32)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(&bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated chunk"))?;
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(bad("short fmt chunk"));
                }
                let tag = u16_at(&bytes, body);
                let bits = u16_at(&bytes, body + 14);
                if tag != FORMAT_FLOAT || bits != 32 {
                    return Err(bad(
                        "only 32-bit IEEE float WAV (format tag 3) is supported",
                    ));
                }
                format = Some((u16_at(&bytes, body + 2), u32_at(&bytes, body + 4)));
            }
            b"data" => {
                let (n_ch, rate) = format.ok_or_else(|| bad("data chunk before fmt chunk"))?;
                let n_ch = usize::from(n_ch);
                if n_ch == 0 || len % (4 * n_ch) != 0 {
                    return Err(bad("data length is not a whole number of frames"));
                }
                let frames = len / (4 * n_ch);
                let mut channels = vec![Vec::with_capacity(frames); n_ch];
                for (k, chunk) in bytes[body..end].chunks_exact(4).enumerate() {
                    channels[k % n_ch]
                        .push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
                }
                return Ok((channels, rate));
            }
            _ => {}
        }
        pos = end + (len & 1);
    }
    Err(bad("no data chunk"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_and_round_trip() {
        let ch = vec![
            vec![0.5f32, -0.25, 1.0],
            vec![0.0, 0.125, -1.0],
            vec![2.0, 3.0, 4.0],
            vec![-2.0, -3.0, -4.0],
        ];
        let mut buf = Vec::new();
        write_f32(&mut buf, &ch, 48_000).unwrap();
        assert_eq!(buf.len(), 44 + 4 * 4 * 3);
        assert_eq!(&buf[20..22], &3u16.to_le_bytes());
        assert_eq!(&buf[22..24], &4u16.to_le_bytes());
        assert_eq!(&buf[34..36], &32u16.to_le_bytes());
        let (back, rate) = read_f32(&buf[..]).unwrap();
        assert_eq!(rate, 48_000);
        assert_eq!(back, ch);
    }

    #[test]
    fn rejects_pcm() {
        let mut buf = Vec::new();
        write_f32(&mut buf, &[vec![0.0f32; 4]], 16_000).unwrap();
        buf[20] = 1;
        assert!(read_f32(&buf[..]).is_err());
    }
}
