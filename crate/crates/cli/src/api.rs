//! JSON wire types shared by the HTTP service and its clients.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use heartgen_core::datakit::{n_voxels, AnatomySequence, ConditionProfile, Dims, SegVolume, Spacing, N_CLASSES};
use heartgen_core::engine::{CompletionMode, SweepFactor, SweepResult};
use heartgen_core::metrics::{phenotypes, PhenotypeRecord};
use heartgen_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codec {
    /// Base64 of the raw one-byte-per-voxel labels.
    #[default]
    RawB64,
    /// Base64 of `[u8 label][u32 LE run length]` records.
    RleB64,
}

pub fn rle_encode(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let v = labels[i];
        let mut j = i + 1;
        while j < labels.len() && labels[j] == v && j - i < u32::MAX as usize {
            j += 1;
        }
        out.push(v);
        out.extend_from_slice(&((j - i) as u32).to_le_bytes());
        i = j;
    }
    out
}

pub fn rle_decode(bytes: &[u8], expected: usize) -> Result<Vec<u8>> {
    if bytes.len() % 5 != 0 {
        return Err(Error::InvalidInput(format!("RLE stream length {} is not a multiple of 5", bytes.len())));
    }
    let mut out = Vec::with_capacity(expected);
    for run in bytes.chunks_exact(5) {
        let count = u32::from_le_bytes([run[1], run[2], run[3], run[4]]) as usize;
        if count == 0 {
            return Err(Error::InvalidInput("RLE run of length 0".into()));
        }
        if out.len() + count > expected {
            return Err(Error::InvalidInput(format!("RLE stream decodes to more than {expected} voxels")));
        }
        out.resize(out.len() + count, run[0]);
    }
    Ok(out)
}

/// A label sequence in transport form with its phenotypes attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSequencePayload {
    pub dims: Dims,
    pub spacing: Spacing,
    #[serde(rename = "T")]
    pub t_frames: usize,
    pub frame_period_s: f64,
    #[serde(default)]
    pub codec: Codec,
    pub frames: Vec<String>,
    /// Absent when the sequence has no LV at end-diastole.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phenotypes: Option<PhenotypeRecord>,
}

impl ApiSequencePayload {
    pub fn encode(seq: &AnatomySequence, codec: Codec) -> Self {
        let frames = seq
            .frames()
            .iter()
            .map(|f| match codec {
                Codec::RawB64 => B64.encode(f.labels()),
                Codec::RleB64 => B64.encode(rle_encode(f.labels())),
            })
            .collect();
        Self {
            dims: seq.dims(),
            spacing: seq.spacing(),
            t_frames: seq.t_frames(),
            frame_period_s: seq.frame_period_s(),
            codec,
            frames,
            phenotypes: phenotypes(seq).ok(),
        }
    }

    pub fn decode(&self) -> Result<AnatomySequence> {
        AnatomySequence::new(self.decode_frames()?, self.frame_period_s)
    }

    /// Decodes the frames without requiring a full cycle, so a single
    /// frame (`T = 1`) is accepted.
    pub fn decode_frames(&self) -> Result<Vec<SegVolume>> {
        if self.frames.is_empty() || self.frames.len() != self.t_frames {
            return Err(Error::InvalidInput(format!(
                "payload declares T = {} but carries {} frames",
                self.t_frames,
                self.frames.len()
            )));
        }
        let n = n_voxels(self.dims);
        self.frames
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let bytes = B64
                    .decode(s)
                    .map_err(|e| Error::InvalidInput(format!("frame {t}: invalid base64: {e}")))?;
                let labels = match self.codec {
                    Codec::RawB64 => bytes,
                    Codec::RleB64 => rle_decode(&bytes, n).map_err(|e| Error::InvalidInput(format!("frame {t}: {e}")))?,
                };
                if labels.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "frame {t} decodes to {} voxels, dims {:?} need {n}",
                        labels.len(),
                        self.dims
                    )));
                }
                if let Some(bad) = labels.iter().find(|&&l| l as usize >= N_CLASSES) {
                    return Err(Error::InvalidInput(format!("frame {t} holds label {bad} outside 0..{N_CLASSES}")));
                }
                SegVolume::new(self.dims, self.spacing, labels)
            })
            .collect()
    }
}

fn default_n() -> usize {
    1
}

fn default_fix_latent() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub conditions: ConditionProfile,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub codec: Codec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteRequest {
    /// Frame 0 of this payload is used; a single-frame payload is fine.
    pub x0: ApiSequencePayload,
    pub conditions: ConditionProfile,
    #[serde(default)]
    pub mode: CompletionMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub codec: Codec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub base_conditions: ConditionProfile,
    pub factor: SweepFactor,
    pub values: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fix_latent")]
    pub fix_latent: bool,
    /// Attach every generated sample to the response.
    #[serde(default)]
    pub include_samples: bool,
    #[serde(default)]
    pub codec: Codec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntryResponse {
    pub value: f64,
    pub conditions: ConditionProfile,
    pub mean: PhenotypeRecord,
    pub ci95: PhenotypeRecord,
    pub invalid_samples: usize,
    pub phenotypes: Vec<PhenotypeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<ApiSequencePayload>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub factor: SweepFactor,
    pub values: Vec<f64>,
    pub n: usize,
    pub fix_latent: bool,
    pub entries: Vec<SweepEntryResponse>,
}

impl SweepResponse {
    pub fn from_result(res: &SweepResult, samples: Option<Codec>) -> Self {
        Self {
            factor: res.factor,
            values: res.values.clone(),
            n: res.n,
            fix_latent: res.fix_latent,
            entries: res
                .entries
                .iter()
                .map(|e| SweepEntryResponse {
                    value: e.value,
                    conditions: e.profile,
                    mean: e.mean,
                    ci95: e.ci95,
                    invalid_samples: e.invalid_samples,
                    phenotypes: e.phenotypes.clone(),
                    samples: samples.map(|c| e.sequences.iter().map(|s| ApiSequencePayload::encode(s, c)).collect()),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq() -> AnatomySequence {
        let dims = [4, 3, 2];
        let frames = (0..3)
            .map(|t| SegVolume::new(dims, [1.5, 1.5, 3.0], (0..24).map(|i| ((i / (3 + t)) % 4) as u8).collect()).unwrap())
            .collect();
        AnatomySequence::new(frames, 0.05).unwrap()
    }

    #[test]
    fn rle_round_trip() {
        let labels = vec![0, 0, 0, 1, 1, 3, 0, 0, 2];
        let enc = rle_encode(&labels);
        assert_eq!(enc.len(), 5 * 5);
        assert_eq!(&enc[..5], &[0, 3, 0, 0, 0]);
        assert_eq!(rle_decode(&enc, labels.len()).unwrap(), labels);
        assert!(rle_decode(&enc, 5).is_err());
        assert!(rle_decode(&enc[..7], 9).is_err());
        assert!(rle_decode(&[1, 0, 0, 0, 0], 9).is_err());
        assert!(rle_encode(&[]).is_empty());
    }

    #[test]
    fn payload_round_trip_both_codecs() {
        let s = seq();
        for codec in [Codec::RawB64, Codec::RleB64] {
            let p = ApiSequencePayload::encode(&s, codec);
            assert_eq!(p.decode().unwrap(), s);
            let json = serde_json::to_string(&p).unwrap();
            assert!(json.contains("\"T\":3"));
            let back: ApiSequencePayload = serde_json::from_str(&json).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn payload_length_is_checked() {
        let mut p = ApiSequencePayload::encode(&seq(), Codec::RawB64);
        p.dims = [4, 3, 3];
        assert!(p.decode().is_err());
        let mut p = ApiSequencePayload::encode(&seq(), Codec::RawB64);
        p.t_frames = 2;
        assert!(p.decode().is_err());
        let mut p = ApiSequencePayload::encode(&seq(), Codec::RawB64);
        p.frames[0] = B64.encode([9u8; 24]);
        assert!(p.decode().is_err());
        p.frames[0] = "***".into();
        assert!(p.decode().is_err());
    }
}
