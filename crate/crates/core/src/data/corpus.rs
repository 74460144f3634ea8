//! Binary sample corpus. Masks are stored once per scene in a sibling
//! `masks/` directory and referenced by frame number.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::labels::{ActionLabels, SceneContext};
use super::masks::MaskPack;
use super::windows::SequenceSample;
use crate::error::{CoreError, Result};
use crate::geometry::{PoseFrame, NUM_JOINTS};
use crate::tracking::BBox;

pub const MAGIC: &[u8; 8] = b"VRUSAMP\0";
pub const VERSION: u32 = 1;
/// Largest frame number representable exactly as f32.
const MAX_FRAME: i64 = 1 << 24;

fn put_field(out: &mut Vec<u8>, name: &str, dims: &[usize], data: impl IntoIterator<Item = f64>) {
    out.push(name.len() as u8);
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let mut n = 0;
    for v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
        n += 1;
    }
    debug_assert_eq!(n, dims.iter().product::<usize>());
}

pub fn encode_sample(s: &SequenceSample, out: &mut Vec<u8>) -> Result<()> {
    let n = s.obs_len();
    let h = s.horizon();
    if s.mask_frames.iter().any(|f| f.abs() > MAX_FRAME) {
        return Err(CoreError::Data(format!("frame number beyond {MAX_FRAME} in scene {}", s.scene_id)));
    }
    out.extend_from_slice(&(s.scene_id.len() as u32).to_le_bytes());
    out.extend_from_slice(s.scene_id.as_bytes());
    out.extend_from_slice(&s.person_id.to_le_bytes());
    out.extend_from_slice(&s.start_frame.to_le_bytes());
    out.extend_from_slice(&9u32.to_le_bytes());
    put_field(
        out,
        "poses",
        &[n, NUM_JOINTS, 3],
        s.poses.iter().flat_map(|p| p.keypoints.iter().flat_map(|k| [k.x, k.y, k.v])),
    );
    put_field(out, "boxes", &[n, 4], s.boxes.iter().flat_map(|b| b.to_array()));
    put_field(out, "mask_frames", &[n], s.mask_frames.iter().map(|&f| f as f64));
    let ix = s.labels.indices();
    put_field(out, "labels", &[4], ix[..4].iter().map(|&i| i as f64));
    put_field(out, "crossing", &[1], [ix[4] as f64]);
    put_field(out, "future_centers", &[h, 2], s.future_centers.iter().flatten().copied());
    put_field(out, "context", &[5], s.context.bits());
    put_field(out, "image_size", &[2], s.image_size);
    put_field(out, "pad_flags", &[n + h], s.pad_flags.iter().map(|&p| if p { 1.0 } else { 0.0 }));
    Ok(())
}

pub fn encode_corpus(samples: &[SequenceSample]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        encode_sample(s, &mut out)?;
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, samples: &[SequenceSample]) -> Result<()> {
    let bytes = encode_corpus(samples)?;
    fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CoreError::Data(format!("corpus truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| CoreError::Data("corpus string is not UTF-8".into()))
    }
}

struct RawRecord {
    scene_id: String,
    person_id: u64,
    start_frame: i64,
    fields: HashMap<String, (Vec<usize>, Vec<f64>)>,
}

impl RawRecord {
    fn field(&self, name: &str, rank: usize) -> Result<(&[usize], &[f64])> {
        let (dims, data) = self
            .fields
            .get(name)
            .ok_or_else(|| CoreError::Data(format!("record for {} lacks field {name}", self.scene_id)))?;
        if dims.len() != rank {
            return Err(CoreError::Data(format!("field {name} has rank {}, expected {rank}", dims.len())));
        }
        Ok((dims, data))
    }
}

fn read_record(c: &mut Cursor) -> Result<RawRecord> {
    let len = c.u32()? as usize;
    let scene_id = c.string(len)?;
    let person_id = c.u64()?;
    let start_frame = c.u64()? as i64;
    let nfields = c.u32()?;
    let mut fields = HashMap::new();
    for _ in 0..nfields {
        let name_len = c.u8()? as usize;
        let name = c.string(name_len)?;
        let rank = c.u8()? as usize;
        let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = c.take(count.checked_mul(4).ok_or_else(|| CoreError::Data("field too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect();
        fields.insert(name, (dims, data));
    }
    Ok(RawRecord {
        scene_id,
        person_id,
        start_frame,
        fields,
    })
}

fn build_sample(r: RawRecord, masks: &mut dyn FnMut(&str) -> Result<Arc<MaskPack>>) -> Result<SequenceSample> {
    let (pd, poses) = r.field("poses", 3)?;
    if pd[1] != NUM_JOINTS || pd[2] != 3 {
        return Err(CoreError::Data(format!("poses shape {pd:?} is not [N, 17, 3]")));
    }
    let n = pd[0];
    let (bd, boxes) = r.field("boxes", 2)?;
    let (md, mask_frames) = r.field("mask_frames", 1)?;
    let (_, labels) = r.field("labels", 1)?;
    let (_, crossing) = r.field("crossing", 1)?;
    let (fd, centers) = r.field("future_centers", 2)?;
    let (_, context) = r.field("context", 1)?;
    let (_, image_size) = r.field("image_size", 1)?;
    let (_, pads) = r.field("pad_flags", 1)?;
    let h = fd[0];
    if bd != [n, 4] || md != [n] || fd[1] != 2 || labels.len() != 4 || crossing.len() != 1 || image_size.len() != 2 || pads.len() != n + h {
        return Err(CoreError::Data(format!("inconsistent field shapes in record for {}", r.scene_id)));
    }
    let poses = poses
        .chunks_exact(NUM_JOINTS * 3)
        .map(|c| {
            let rows: Vec<[f64; 3]> = c.chunks_exact(3).map(|k| [k[0], k[1], k[2]]).collect();
            PoseFrame::from_triples(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let pack = masks(&r.scene_id)?;
    let mut grids = Vec::with_capacity(n);
    for &f in mask_frames {
        let g = pack
            .get(f as i64)
            .ok_or_else(|| CoreError::Data(format!("scene {} has no mask for frame {f}", r.scene_id)))?;
        grids.push(Arc::clone(g));
    }
    let idx = |v: f64| v.round() as usize;
    Ok(SequenceSample {
        poses,
        boxes: boxes.chunks_exact(4).map(|b| BBox::new(b[0], b[1], b[2], b[3])).collect(),
        masks: grids,
        mask_frames: mask_frames.iter().map(|&f| f as i64).collect(),
        labels: ActionLabels::from_indices([
            idx(labels[0]),
            idx(labels[1]),
            idx(labels[2]),
            idx(labels[3]),
            idx(crossing[0]),
        ])?,
        future_centers: centers.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        context: SceneContext::from_bits(context)?,
        image_size: [image_size[0], image_size[1]],
        pad_flags: pads.iter().map(|&p| p > 0.5).collect(),
        scene_id: r.scene_id,
        person_id: r.person_id,
        start_frame: r.start_frame,
    })
}

pub fn decode_corpus(bytes: &[u8], masks: &mut dyn FnMut(&str) -> Result<Arc<MaskPack>>) -> Result<Vec<SequenceSample>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(CoreError::Data("not a sample corpus (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CoreError::Data(format!("unsupported corpus version {version}")));
    }
    let count = c.u64()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        out.push(build_sample(read_record(&mut c)?, masks)?);
    }
    if c.pos != bytes.len() {
        return Err(CoreError::Data(format!("{} trailing bytes after corpus", bytes.len() - c.pos)));
    }
    Ok(out)
}

/// Reads a corpus file, loading mask packs from `masks_dir` on demand.
pub fn read_corpus(path: &Path, masks_dir: &Path) -> Result<Vec<SequenceSample>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(path, e))?;
    let mut cache: HashMap<String, Arc<MaskPack>> = HashMap::new();
    let mut loader = |scene: &str| -> Result<Arc<MaskPack>> {
        if let Some(p) = cache.get(scene) {
            return Ok(Arc::clone(p));
        }
        let pack = Arc::new(MaskPack::load(masks_dir, scene)?);
        cache.insert(scene.to_string(), Arc::clone(&pack));
        Ok(pack)
    };
    decode_corpus(&bytes, &mut loader)
}

/// Copies the mask packs of the given scenes into `dir`.
pub fn write_mask_packs<'a>(dir: &Path, packs: impl IntoIterator<Item = (&'a String, &'a MaskPack)>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    for (scene, pack) in packs {
        pack.save(dir, scene)?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CoreError::io(path, e))
}
