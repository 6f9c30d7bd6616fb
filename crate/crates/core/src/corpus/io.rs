//! On-disk corpus layout: raw little-endian trial arrays with a manifest of
//! sidecar metadata records, plus 16-bit PCM WAV voice clips.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, Corpus, TrialMeta, EEG_CHANNELS, EEG_TOTAL_SAMPLES};
use crate::error::{Error, Result};

/// One manifest line: trial identity plus the sidecar metadata describing its
/// binary array file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: u32,
    pub subject: usize,
    pub class: String,
    pub condition: Condition,
    pub seed: u64,
    pub path: String,
    pub shape: (usize, usize),
    pub dtype: String,
}

/// Write a trial array as raw little-endian f32, row-major.
pub fn write_trial_f32(path: &Path, data: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in data.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trial_f32(path: &Path, shape: (usize, usize)) -> Result<Array2<f32>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let expected = shape.0 * shape.1 * 4;
    if bytes.len() != expected {
        return Err(Error::invalid(format!(
            "{}: expected {expected} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let vals: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Array2::from_shape_vec(shape, vals)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Write a mono 16-bit PCM WAV file.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let data_len = (samples.len() * 2) as u32;
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&sample_rate.to_le_bytes())?;
    w.write_all(&(sample_rate * 2).to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?; // bits per sample
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &v in samples {
        let s = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a mono 16-bit PCM WAV file; returns (samples in [-1, 1], rate).
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::invalid(format!("{}: {m}", path.display()));
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut rate = 0u32;
    let mut channels = 0u16;
    let mut bits = 0u16;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = &bytes[pos + 8..(pos + 8 + len).min(bytes.len())];
        match id {
            b"fmt " => {
                channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + len + (len & 1);
    }
    if channels != 1 || bits != 16 {
        return Err(bad("expected mono 16-bit PCM"));
    }
    let body = data.ok_or_else(|| bad("missing data chunk"))?;
    let samples = body
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32767.0)
        .collect();
    Ok((samples, rate))
}

/// Materialize a corpus on disk: one binary file per trial, WAV voice clips,
/// and a JSONL manifest. Returns the manifest records in trial order.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<Vec<ManifestRecord>> {
    let trials_dir = dir.join("trials");
    let voices_dir = dir.join("voices");
    fs::create_dir_all(&trials_dir)?;
    fs::create_dir_all(&voices_dir)?;

    for subject in 0..corpus.cfg.subjects {
        for class_idx in 0..corpus.classes.len() {
            let clip = corpus.voice(subject, class_idx)?;
            write_wav(
                &voices_dir.join(voice_file_name(subject, class_idx)),
                &clip.samples,
                22050,
            )?;
        }
    }

    let mut records = Vec::with_capacity(corpus.trials.len());
    let manifest = File::create(dir.join("manifest.jsonl"))?;
    let mut mw = BufWriter::new(manifest);
    for meta in &corpus.trials {
        let trial = corpus.eeg(meta)?;
        let rel = format!("trials/{}", trial_file_name(meta.id));
        write_trial_f32(&dir.join(&rel), &trial.samples)?;
        let rec = ManifestRecord {
            id: meta.id,
            subject: meta.subject,
            class: corpus.label(meta).to_string(),
            condition: meta.condition,
            seed: meta.seed,
            path: rel,
            shape: (EEG_CHANNELS, EEG_TOTAL_SAMPLES),
            dtype: "f32".to_string(),
        };
        serde_json::to_writer(&mut mw, &rec)?;
        mw.write_all(b"\n")?;
        records.push(rec);
    }
    mw.flush()?;
    Ok(records)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let f = File::open(dir.join("manifest.jsonl"))?;
    let mut records = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

pub fn trial_file_name(id: u32) -> String {
    format!("t{id:06}.f32")
}

pub fn voice_file_name(subject: usize, class_idx: usize) -> String {
    format!("s{subject:02}_c{class_idx:02}.wav")
}

pub fn voice_path(dir: &Path, subject: usize, class_idx: usize) -> PathBuf {
    dir.join("voices").join(voice_file_name(subject, class_idx))
}

/// Check that a trial on disk matches its manifest record when regenerated
/// from the metadata (corpus integrity probe used by resumable stages).
pub fn verify_trial(corpus: &Corpus, rec: &ManifestRecord, dir: &Path) -> Result<bool> {
    let meta: &TrialMeta = corpus.meta(rec.id);
    let regenerated = corpus.eeg(meta)?;
    let on_disk = read_trial_f32(&dir.join(&rec.path), rec.shape)?;
    Ok(regenerated.samples == on_disk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusConfig;

    #[test]
    fn wav_round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("eegspeak-wav-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let corpus = Corpus::new(
            CorpusConfig {
                subjects: 1,
                trials_per_class: 1,
                ..CorpusConfig::default()
            },
            3,
        );
        let clip = corpus.voice(0, 4).unwrap();
        let path = dir.join("clip.wav");
        write_wav(&path, &clip.samples, 22050).unwrap();
        let (back, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 22050);
        assert_eq!(back.len(), clip.samples.len());
        // Clips are synthesized on the 16-bit grid, so the round trip is exact.
        for (a, b) in clip.samples.iter().zip(&back) {
            assert_eq!(a, b);
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn trial_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("eegspeak-trial-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let data = Array2::from_shape_fn((4, 7), |(i, j)| (i * 7 + j) as f32 * 0.25 - 3.0);
        let path = dir.join("t.f32");
        write_trial_f32(&path, &data).unwrap();
        let back = read_trial_f32(&path, (4, 7)).unwrap();
        assert_eq!(data, back);
        assert!(read_trial_f32(&path, (4, 8)).is_err());
        fs::remove_dir_all(&dir).ok();
    }
}
