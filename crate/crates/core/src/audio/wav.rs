//! PCM16 mono RIFF/WAVE codec.
//!
//! Reading dequantises by dividing by 32768. Writing multiplies by 32768,
//! rounds half away from zero and saturates to the i16 range, so every PCM
//! word survives a read/write cycle unchanged.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

use super::Waveform;
use crate::error::{Error, Result};

const WAVE_FORMAT_PCM: u16 = 1;
const PCM_SCALE: f32 = 32768.0;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("file not found")]
    NotFound,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a RIFF/WAVE container")]
    NotRiff,
    #[error("missing or truncated fmt chunk")]
    BadFmt,
    #[error("unsupported encoding: format code {format}, {bits} bits per sample (need PCM 16-bit)")]
    UnsupportedEncoding { format: u16, bits: u16 },
    #[error("unsupported channel count {0} (need mono)")]
    ChannelCount(u16),
    #[error("no data chunk")]
    NoData,
    #[error("data chunk of {declared} bytes is inconsistent with the file ({available} bytes available)")]
    DataLength { declared: u64, available: u64 },
    #[error("requested samples {start}..{end} but the file holds {len}")]
    OutOfRange { start: u64, end: u64, len: u64 },
}

/// Header facts of a validated PCM16 mono file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate_hz: u32,
    pub num_samples: u64,
    data_offset: u64,
}

/// Outcome of [`write_wav`]; `clipped` counts samples outside [-1, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteStats {
    pub clipped: usize,
}

fn wrap(path: &Path) -> impl Fn(WavError) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> std::result::Result<BufReader<File>, WavError> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(WavError::NotFound),
        Err(e) => Err(WavError::Io(e)),
    }
}

fn read_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn parse_header<R: Read + Seek>(r: &mut R) -> std::result::Result<WavInfo, WavError> {
    let file_len = r.seek(SeekFrom::End(0))?;
    r.seek(SeekFrom::Start(0))?;

    let mut riff = [0u8; 12];
    if r.read_exact(&mut riff).is_err() || &riff[0..4] != b"RIFF" || &riff[8..12] != b"WAVE" {
        return Err(WavError::NotRiff);
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut pos = 12u64;
    loop {
        let mut head = [0u8; 8];
        if r.read_exact(&mut head).is_err() {
            break;
        }
        let id = [head[0], head[1], head[2], head[3]];
        let size = read_u32(&head[4..8]) as u64;
        pos += 8;
        match &id {
            b"fmt " => {
                if size < 16 || pos + size > file_len {
                    return Err(WavError::BadFmt);
                }
                let mut body = vec![0u8; size as usize];
                r.read_exact(&mut body).map_err(|_| WavError::BadFmt)?;
                fmt = Some((
                    read_u16(&body[0..2]),
                    read_u16(&body[2..4]),
                    read_u32(&body[4..8]),
                    read_u16(&body[14..16]),
                ));
            }
            b"data" => {
                let (format, channels, rate, bits) = fmt.ok_or(WavError::BadFmt)?;
                if format != WAVE_FORMAT_PCM || bits != 16 {
                    return Err(WavError::UnsupportedEncoding { format, bits });
                }
                if channels != 1 {
                    return Err(WavError::ChannelCount(channels));
                }
                if rate == 0 {
                    return Err(WavError::BadFmt);
                }
                let available = file_len - pos;
                if size % 2 != 0 || size > available {
                    return Err(WavError::DataLength {
                        declared: size,
                        available,
                    });
                }
                return Ok(WavInfo {
                    sample_rate_hz: rate,
                    num_samples: size / 2,
                    data_offset: pos,
                });
            }
            _ => {
                r.seek(SeekFrom::Current(size as i64))?;
            }
        }
        // chunks are word aligned
        pos += size + (size & 1);
        r.seek(SeekFrom::Start(pos))?;
    }
    match fmt {
        None => Err(WavError::BadFmt),
        Some(_) => Err(WavError::NoData),
    }
}

fn decode(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / PCM_SCALE)
        .collect()
}

/// Quantises one sample; returns the PCM word and whether it had to be clamped.
pub fn quantise(sample: f32) -> (i16, bool) {
    let scaled = (sample * PCM_SCALE).round();
    let clipped = !(-1.0..=1.0).contains(&sample);
    (scaled.clamp(i16::MIN as f32, i16::MAX as f32) as i16, clipped)
}

pub fn dequantise(word: i16) -> f32 {
    word as f32 / PCM_SCALE
}

pub fn read_wav_info(path: impl AsRef<Path>) -> Result<WavInfo> {
    let path = path.as_ref();
    let mut r = open(path).map_err(wrap(path))?;
    parse_header(&mut r).map_err(wrap(path))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let info = read_wav_info(path)?;
    read_wav_range(path, 0, info.num_samples as usize)
}

/// Reads `len` samples starting at sample `start` without loading the rest
/// of the file.
pub fn read_wav_range(path: impl AsRef<Path>, start: usize, len: usize) -> Result<Waveform> {
    let path = path.as_ref();
    let err = wrap(path);
    let mut r = open(path).map_err(&err)?;
    let info = parse_header(&mut r).map_err(&err)?;
    let end = start as u64 + len as u64;
    if end > info.num_samples {
        return Err(err(WavError::OutOfRange {
            start: start as u64,
            end,
            len: info.num_samples,
        }));
    }
    r.seek(SeekFrom::Start(info.data_offset + 2 * start as u64))
        .map_err(|e| err(e.into()))?;
    let mut bytes = vec![0u8; 2 * len];
    r.read_exact(&mut bytes).map_err(|e| err(e.into()))?;
    Ok(Waveform::from_trusted(decode(&bytes), info.sample_rate_hz))
}

/// Encodes a waveform as a PCM16 mono file image.
pub fn encode_wav(w: &Waveform) -> (Vec<u8>, WriteStats) {
    let n = w.len();
    let data_len = (2 * n) as u32;
    let rate = w.sample_rate_hz();
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    let mut stats = WriteStats::default();
    for &s in w.samples() {
        let (word, clipped) = quantise(s);
        stats.clipped += clipped as usize;
        out.extend_from_slice(&word.to_le_bytes());
    }
    (out, stats)
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<WriteStats> {
    let path = path.as_ref();
    let (bytes, stats) = encode_wav(w);
    let f = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut f = BufWriter::new(f);
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    if stats.clipped > 0 {
        tracing::warn!(path = %path.display(), clipped = stats.clipped, "samples clamped on write");
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_pcm(words: &[i16], channels: u16, format: u16, bits: u16) -> Vec<u8> {
        let data: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&16_000u32.to_le_bytes());
        out.extend_from_slice(&(32_000u32 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&data);
        out
    }

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    fn wav_err(e: Error) -> WavError {
        match e {
            Error::Wav { source, .. } => source,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn dequantises_by_32768() {
        let f = write_tmp(&raw_pcm(&[0, 16384, -32768], 1, 1, 16));
        let w = read_wav(f.path()).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(w.sample_rate_hz(), 16_000);
    }

    #[test]
    fn quantiser_edges() {
        assert_eq!(quantise(1.0), (32767, false));
        assert_eq!(quantise(0.0), (0, false));
        assert_eq!(quantise(-1.0), (-32768, false));
        assert_eq!(quantise(1.2), (32767, true));
        assert_eq!(quantise(-1.5), (-32768, true));
        // half away from zero
        assert_eq!(quantise(0.5 / 32768.0).0, 1);
        assert_eq!(quantise(-0.5 / 32768.0).0, -1);
    }

    #[test]
    fn write_counts_clipped_samples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let w = Waveform::new(vec![1.2, 0.0, 1.0, -1.0001], 16_000).unwrap();
        let stats = write_wav(&w, &p).unwrap();
        assert_eq!(stats.clipped, 2);
        let back = read_wav(&p).unwrap();
        assert_eq!(back.samples()[0], 32767.0 / 32768.0);
    }

    #[test]
    fn rejects_stereo() {
        let f = write_tmp(&raw_pcm(&[0, 0, 1, 1], 2, 1, 16));
        assert!(matches!(wav_err(read_wav(f.path()).unwrap_err()), WavError::ChannelCount(2)));
    }

    #[test]
    fn rejects_float_and_non_riff() {
        let f = write_tmp(&raw_pcm(&[0, 0], 1, 3, 16));
        assert!(matches!(
            wav_err(read_wav(f.path()).unwrap_err()),
            WavError::UnsupportedEncoding { format: 3, .. }
        ));
        let f = write_tmp(b"OggS not a wav file at all........");
        assert!(matches!(wav_err(read_wav(f.path()).unwrap_err()), WavError::NotRiff));
        assert!(matches!(
            wav_err(read_wav("/definitely/not/here.wav").unwrap_err()),
            WavError::NotFound
        ));
    }

    #[test]
    fn rejects_inconsistent_data_length() {
        let mut bytes = raw_pcm(&[1, 2, 3], 1, 1, 16);
        let n = bytes.len();
        bytes.truncate(n - 2);
        let f = write_tmp(&bytes);
        assert!(matches!(
            wav_err(read_wav(f.path()).unwrap_err()),
            WavError::DataLength { .. }
        ));
    }

    #[test]
    fn skips_unknown_chunks_and_reads_ranges() {
        let mut bytes = raw_pcm(&[10, 20, 30, 40, 50], 1, 1, 16);
        // splice a LIST chunk (odd length, padded) between fmt and data
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), b"abc\0"].concat();
        bytes.splice(36..36, list);
        let f = write_tmp(&bytes);
        let info = read_wav_info(f.path()).unwrap();
        assert_eq!(info.num_samples, 5);
        let part = read_wav_range(f.path(), 1, 3).unwrap();
        assert_eq!(part.samples(), &[20.0 / 32768.0, 30.0 / 32768.0, 40.0 / 32768.0]);
        assert!(read_wav_range(f.path(), 4, 2).is_err());
    }

    proptest! {
        #[test]
        fn pcm_words_round_trip(words in proptest::collection::vec(any::<i16>(), 1..200)) {
            let w = Waveform::new(words.iter().map(|&x| dequantise(x)).collect(), 16_000).unwrap();
            let (bytes, stats) = encode_wav(&w);
            prop_assert_eq!(stats.clipped, 0);
            let f = write_tmp(&bytes);
            let back = read_wav(f.path()).unwrap();
            let again: Vec<i16> = back.samples().iter().map(|&s| quantise(s).0).collect();
            prop_assert_eq!(again, words);
        }
    }
}
