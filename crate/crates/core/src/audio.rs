//! Multichannel audio buffers and WAV file I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::C64;

/// Default sampling rate used throughout the toolkit (Hz).
pub const DEFAULT_FS: f64 = 16_000.0;

/// Real-valued multichannel time-domain signal.
///
/// Channel-major storage: `channels[m][n]` is sample `n` of microphone `m`.
/// All channels have equal length and every sample is finite.
#[derive(Debug, Clone)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    fs: f64,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, fs: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidAudio("no channels".into()));
        }
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::InvalidAudio("zero-length channel".into()));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidAudio("ragged channel lengths".into()));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidAudio(format!("non-positive fs {fs}")));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio("non-finite sample".into()));
        }
        Ok(Self { channels, fs })
    }

    pub fn from_mono(samples: Vec<f64>, fs: f64) -> Result<Self> {
        Self::new(vec![samples], fs)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Extract one channel as a mono buffer.
    pub fn mono(&self, m: usize) -> AudioBuffer {
        AudioBuffer {
            channels: vec![self.channels[m].clone()],
            fs: self.fs,
        }
    }

    /// Truncate every channel to `n` samples.
    pub fn truncated(&self, n: usize) -> AudioBuffer {
        let n = n.min(self.len());
        AudioBuffer {
            channels: self.channels.iter().map(|c| c[..n].to_vec()).collect(),
            fs: self.fs,
        }
    }

    /// Slice out `[start, end)` of every channel.
    pub fn segment(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.len());
        let start = start.min(end);
        AudioBuffer {
            channels: self.channels.iter().map(|c| c[start..end].to_vec()).collect(),
            fs: self.fs,
        }
    }

    pub fn energy(&self, m: usize) -> f64 {
        self.channels[m].iter().map(|s| s * s).sum()
    }

    /// Read a WAV file; 16/24-bit PCM and 32-bit float are supported.
    pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let m = spec.channels as usize;
        let mut channels = vec![Vec::new(); m];
        match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Float, 32) => {
                for (i, s) in reader.samples::<f32>().enumerate() {
                    channels[i % m].push(s? as f64);
                }
            }
            (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
                let scale = 1.0 / (1i64 << (bits - 1)) as f64;
                for (i, s) in reader.samples::<i32>().enumerate() {
                    channels[i % m].push(s? as f64 * scale);
                }
            }
            (fmt, bits) => {
                return Err(Error::InvalidAudio(format!(
                    "unsupported WAV format {fmt:?} {bits}-bit"
                )))
            }
        }
        Self::new(channels, spec.sample_rate as f64)
    }

    /// Write all channels, interleaved.
    pub fn write_wav<P: AsRef<Path>>(&self, path: P, format: WavFormat) -> Result<()> {
        let spec = hound::WavSpec {
            channels: self.num_channels() as u16,
            sample_rate: self.fs.round() as u32,
            bits_per_sample: format.bits(),
            sample_format: format.sample_format(),
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for n in 0..self.len() {
            for ch in &self.channels {
                match format {
                    WavFormat::Float32 => writer.write_sample(ch[n] as f32)?,
                    WavFormat::Pcm16 => {
                        let v = (ch[n] * 32768.0).round().clamp(-32768.0, 32767.0);
                        writer.write_sample(v as i16)?
                    }
                    WavFormat::Pcm24 => {
                        let full = 8_388_608.0; // 2^23
                        let v = (ch[n] * full).round().clamp(-full, full - 1.0);
                        writer.write_sample(v as i32)?
                    }
                }
            }
        }
        writer.finalize()?;
        Ok(())
    }
}

/// Output sample encoding for [`AudioBuffer::write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl WavFormat {
    fn bits(self) -> u16 {
        match self {
            WavFormat::Pcm16 => 16,
            WavFormat::Pcm24 => 24,
            WavFormat::Float32 => 32,
        }
    }

    fn sample_format(self) -> hound::SampleFormat {
        match self {
            WavFormat::Float32 => hound::SampleFormat::Float,
            _ => hound::SampleFormat::Int,
        }
    }
}

/// Complex-valued multichannel signal, produced by modulating a real buffer
/// with `exp(j*alpha*n)`.
#[derive(Debug, Clone)]
pub struct ComplexAudioBuffer {
    channels: Vec<Vec<C64>>,
    fs: f64,
    /// Modulation frequency in rad/sample applied to produce this buffer.
    modulation_freq: f64,
}

impl ComplexAudioBuffer {
    pub(crate) fn from_parts(channels: Vec<Vec<C64>>, fs: f64, modulation_freq: f64) -> Self {
        Self {
            channels,
            fs,
            modulation_freq,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn modulation_freq(&self) -> f64 {
        self.modulation_freq
    }

    pub fn channel(&self, m: usize) -> &[C64] {
        &self.channels[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_empty() {
        assert!(AudioBuffer::new(vec![], 16000.0).is_err());
        assert!(AudioBuffer::new(vec![vec![]], 16000.0).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0; 4], vec![0.0; 5]], 16000.0).is_err());
        assert!(AudioBuffer::new(vec![vec![f64::NAN]], 16000.0).is_err());
        assert!(AudioBuffer::new(vec![vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn wav_roundtrip_float32() {
        let dir = std::env::temp_dir().join("cyclobeam_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt_f32.wav");
        let audio = AudioBuffer::new(
            vec![
                (0..64).map(|n| (n as f64 * 0.1).sin()).collect(),
                (0..64).map(|n| (n as f64 * 0.05).cos()).collect(),
            ],
            16000.0,
        )
        .unwrap();
        audio.write_wav(&path, WavFormat::Float32).unwrap();
        let back = AudioBuffer::read_wav(&path).unwrap();
        assert_eq!(back.num_channels(), 2);
        assert_eq!(back.len(), 64);
        for m in 0..2 {
            for n in 0..64 {
                assert!((back.channel(m)[n] - audio.channel(m)[n]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wav_roundtrip_pcm() {
        let dir = std::env::temp_dir().join("cyclobeam_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        for (fmt, tol) in [(WavFormat::Pcm16, 1e-4), (WavFormat::Pcm24, 1e-6)] {
            let path = dir.join(format!("rt_{:?}.wav", fmt));
            let audio = AudioBuffer::from_mono(
                (0..128).map(|n| 0.9 * (n as f64 * 0.07).sin()).collect(),
                16000.0,
            )
            .unwrap();
            audio.write_wav(&path, fmt).unwrap();
            let back = AudioBuffer::read_wav(&path).unwrap();
            for n in 0..128 {
                assert!((back.channel(0)[n] - audio.channel(0)[n]).abs() < tol);
            }
        }
    }
}
