//! Persistence: the snapshot binary format, the trajectory container with
//! its index footer, and the measure file (JSON header + snapshot atoms +
//! weight array). All writes are atomic (write-temp-then-rename) and all
//! round trips are bit-exact.
//!
//! Snapshot layout (little endian):
//!   magic "SNSE" | version u32 | n u32 | L1 L2 L3 f64 | nu f64 | time f64 |
//!   interleaved (re, im) f64 coefficient triples in lexicographic k order
//!   over the stored half-lattice (canonical Hermitian representatives).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, MeasureProvenance};
use crate::spectral::{SpectralField, WaveVectorLattice};
use crate::trajectory::{BudgetAccumulator, Sample, Trajectory};

const SNAPSHOT_MAGIC: &[u8; 4] = b"SNSE";
const TRAJECTORY_MAGIC: &[u8; 4] = b"SNTX";
const MEASURE_MAGIC: &[u8; 4] = b"SNSM";
const FORMAT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(
    w: &mut W,
    field: &SpectralField,
    nu: f64,
    time: f64,
) -> Result<()> {
    let lattice = field.lattice();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(lattice.resolution() as u32)?;
    for l in lattice.periods() {
        w.write_f64::<LittleEndian>(l)?;
    }
    w.write_f64::<LittleEndian>(nu)?;
    w.write_f64::<LittleEndian>(time)?;
    for k in lattice.canonical_half() {
        for c in 0..3 {
            let z = field.coeff(c, k);
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
    }
    Ok(())
}

pub struct SnapshotRecord {
    pub field: SpectralField,
    pub nu: f64,
    pub time: f64,
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<SnapshotRecord> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!(
            "bad snapshot magic {magic:?}, expected {SNAPSHOT_MAGIC:?}"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut periods = [0.0; 3];
    for l in periods.iter_mut() {
        *l = r.read_f64::<LittleEndian>()?;
    }
    let nu = r.read_f64::<LittleEndian>()?;
    let time = r.read_f64::<LittleEndian>()?;
    let lattice = WaveVectorLattice::new(n, periods)?;
    let mut field = SpectralField::zero(lattice.clone());
    for k in lattice.canonical_half() {
        for c in 0..3 {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            field.set_mode(c, k, Complex64::new(re, im))?;
        }
    }
    Ok(SnapshotRecord { field, nu, time })
}

fn snapshot_len(lattice: &WaveVectorLattice) -> u64 {
    (4 + 4 + 4 + 3 * 8 + 8 + 8) as u64 + (lattice.canonical_half().len() * 3 * 2 * 8) as u64
}

/// Atomic file write: the payload goes to a temp file in the target
/// directory first, then is renamed over the destination.
pub fn atomic_write<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(
    path: &Path,
    write_fn: F,
) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_fn(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Trajectory container: snapshot records back to back, then an index
/// footer (offset, time, budget terms per record), the provenance string,
/// and a fixed 16-byte tail [footer_offset u64 | count u32 | magic].
pub fn save_trajectory(path: &Path, traj: &Trajectory, nu: f64) -> Result<()> {
    atomic_write(path, |w| {
        let mut offsets = Vec::with_capacity(traj.len());
        let mut offset = 0u64;
        for s in traj.samples() {
            offsets.push(offset);
            write_snapshot(w, &s.field, nu, s.t)?;
            offset += snapshot_len(s.field.lattice());
        }
        let footer_offset = offset;
        for (s, &off) in traj.samples().iter().zip(offsets.iter()) {
            w.write_u64::<LittleEndian>(off)?;
            w.write_f64::<LittleEndian>(s.t)?;
            match s.budget {
                Some(b) => {
                    w.write_u8(1)?;
                    w.write_f64::<LittleEndian>(b.visc)?;
                    w.write_f64::<LittleEndian>(b.force)?;
                }
                None => {
                    w.write_u8(0)?;
                    w.write_f64::<LittleEndian>(0.0)?;
                    w.write_f64::<LittleEndian>(0.0)?;
                }
            }
        }
        let prov = traj.provenance().as_bytes();
        w.write_u32::<LittleEndian>(prov.len() as u32)?;
        w.write_all(prov)?;
        w.write_u64::<LittleEndian>(footer_offset)?;
        w.write_u32::<LittleEndian>(traj.len() as u32)?;
        w.write_all(TRAJECTORY_MAGIC)?;
        Ok(())
    })
}

pub fn load_trajectory(path: &Path) -> Result<(Trajectory, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    r.seek(SeekFrom::End(-16))?;
    let footer_offset = r.read_u64::<LittleEndian>()?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::Format(format!(
            "bad trajectory magic {magic:?}, expected {TRAJECTORY_MAGIC:?}"
        )));
    }
    r.seek(SeekFrom::Start(footer_offset))?;
    let mut index = Vec::with_capacity(count);
    for _ in 0..count {
        let offset = r.read_u64::<LittleEndian>()?;
        let t = r.read_f64::<LittleEndian>()?;
        let has_budget = r.read_u8()? == 1;
        let visc = r.read_f64::<LittleEndian>()?;
        let force = r.read_f64::<LittleEndian>()?;
        index.push((offset, t, has_budget.then_some(BudgetAccumulator { visc, force })));
    }
    let prov_len = r.read_u32::<LittleEndian>()? as usize;
    let mut prov = vec![0u8; prov_len];
    r.read_exact(&mut prov)?;
    let provenance = String::from_utf8(prov)
        .map_err(|e| Error::Format(format!("provenance is not UTF-8: {e}")))?;

    let mut nu = 0.0;
    let mut samples = Vec::with_capacity(count);
    for (offset, t, budget) in index {
        r.seek(SeekFrom::Start(offset))?;
        let rec = read_snapshot(&mut r)?;
        nu = rec.nu;
        if (rec.time - t).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::Format(format!(
                "index time {t} disagrees with snapshot time {}",
                rec.time
            )));
        }
        let mut s = Sample::new(rec.time, rec.field);
        s.budget = budget;
        samples.push(s);
    }
    Ok((Trajectory::new(samples, provenance)?, nu))
}

#[derive(Serialize, Deserialize)]
struct MeasureHeader {
    provenance: MeasureProvenance,
    atom_count: usize,
    nu: f64,
}

/// Measure file: magic + JSON header (provenance, window), the atom
/// snapshots, then the weight array.
pub fn save_measure(path: &Path, m: &EmpiricalMeasure, nu: f64) -> Result<()> {
    atomic_write(path, |w| {
        let header = serde_json::to_vec(&MeasureHeader {
            provenance: m.provenance().clone(),
            atom_count: m.atoms().len(),
            nu,
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MEASURE_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(header.len() as u32)?;
        w.write_all(&header)?;
        for (_, u) in m.atoms() {
            write_snapshot(w, u, nu, 0.0)?;
        }
        for (weight, _) in m.atoms() {
            w.write_f64::<LittleEndian>(*weight)?;
        }
        Ok(())
    })
}

pub fn load_measure(path: &Path) -> Result<(EmpiricalMeasure, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MEASURE_MAGIC {
        return Err(Error::Format(format!(
            "bad measure magic {magic:?}, expected {MEASURE_MAGIC:?}"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported measure version {version}")));
    }
    let header_len = r.read_u32::<LittleEndian>()? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: MeasureHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("bad measure header: {e}")))?;
    let mut fields = Vec::with_capacity(header.atom_count);
    for _ in 0..header.atom_count {
        fields.push(read_snapshot(&mut r)?.field);
    }
    let mut atoms = Vec::with_capacity(header.atom_count);
    for field in fields {
        let weight = r.read_f64::<LittleEndian>()?;
        atoms.push((weight, field));
    }
    Ok((
        EmpiricalMeasure::new(atoms, header.provenance)?,
        header.nu,
    ))
}

/// JSON writer for reports and constants, atomic like the binary writers.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    atomic_write(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FlowParameters;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field_bits(f: &SpectralField) -> Vec<u64> {
        let lattice = f.lattice();
        let mut bits = Vec::new();
        for k in lattice.active() {
            for c in 0..3 {
                let z = f.coeff(c, k);
                bits.push(z.re.to_bits());
                bits.push(z.im.to_bits());
            }
        }
        bits
    }

    #[test]
    fn snapshot_roundtrip_bit_exact() {
        let lattice = WaveVectorLattice::new(8, [2.0 * std::f64::consts::PI, 3.0, 7.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let field = SpectralField::random_div_free(lattice, None, &mut rng);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &field, 0.37, 12.25).unwrap();
        let rec = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(rec.nu, 0.37);
        assert_eq!(rec.time, 12.25);
        assert_eq!(field_bits(&field), field_bits(&rec.field));
    }

    #[test]
    fn snapshot_bad_magic_rejected() {
        let buf = b"NOPE".to_vec();
        assert!(matches!(
            read_snapshot(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn trajectory_roundtrip_bit_exact() {
        let lattice = WaveVectorLattice::cubic_2pi(8).unwrap();
        let f = SpectralField::shear_mode(lattice.clone(), 0, 1, 1.0).unwrap();
        let p = FlowParameters::new(0.7, f.stokes_apply().scaled(0.7)).unwrap();
        let cfg = crate::dynamics::IntegratorConfig::imex(0.01, 5).unwrap();
        let traj = crate::dynamics::integrate(&f, &p, &cfg, 0.0, 0.2).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.nst");
        save_trajectory(&path, &traj, p.nu()).unwrap();
        let (back, nu) = load_trajectory(&path).unwrap();
        assert_eq!(nu, p.nu());
        assert_eq!(back.len(), traj.len());
        assert_eq!(back.provenance(), traj.provenance());
        for (a, b) in traj.samples().iter().zip(back.samples()) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(field_bits(&a.field), field_bits(&b.field));
            let (ba, bb) = (a.budget.unwrap(), b.budget.unwrap());
            assert_eq!(ba.visc.to_bits(), bb.visc.to_bits());
            assert_eq!(ba.force.to_bits(), bb.force.to_bits());
        }

        // write-load-write reproduces the same bytes
        let path2 = dir.path().join("traj2.nst");
        save_trajectory(&path2, &back, nu).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn measure_roundtrip_bit_exact() {
        let lattice = WaveVectorLattice::cubic_2pi(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = SpectralField::random_div_free(lattice.clone(), None, &mut rng);
        let b = SpectralField::random_div_free(lattice, None, &mut rng);
        let m = EmpiricalMeasure::new(
            vec![(0.25, a), (0.75, b)],
            MeasureProvenance {
                source: "test".into(),
                t0: Some(1.0),
                window: Some(10.0),
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nsm");
        save_measure(&path, &m, 0.5).unwrap();
        let (back, nu) = load_measure(&path).unwrap();
        assert_eq!(nu, 0.5);
        assert_eq!(back.provenance(), m.provenance());
        for ((wa, ua), (wb, ub)) in m.atoms().iter().zip(back.atoms()) {
            assert_eq!(wa.to_bits(), wb.to_bits());
            assert_eq!(field_bits(ua), field_bits(ub));
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp_on_success() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        save_json(&path, &serde_json::json!({"a": 1})).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }
}
