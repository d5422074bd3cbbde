//! JSON view manifests and the on-disk dataset layout.
//!
//! A view is one `<stem>.json` plus its FMAP maps, referenced by file name
//! relative to the manifest's directory. Pairs are two manifests that link to
//! each other; `T_sn` always maps this view's camera frame to the linked one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, RigidTransform};
use crate::synth::{PlanarScene, RenderedView, StereoSample};

use super::{write_atomic, Fmap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    pub instances: String,
    pub planes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewRole {
    Single,
    Source,
    Neighbour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLink {
    pub neighbour: String,
    #[serde(rename = "T_sn")]
    pub t_sn: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedInstance {
    pub score: f64,
    pub class_id: u32,
}

/// Instance predictions: `masks` is an FMAP with one soft-mask channel per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub masks: String,
    pub instances: Vec<PredictedInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewManifest {
    pub camera: CameraIntrinsics,
    /// World→camera, row-major 4×4.
    pub pose: Vec<f64>,
    pub files: MapFiles,
    pub classes: BTreeMap<u16, u32>,
    pub role: ViewRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairLink>,
    /// Instances whose source-view labels are to be treated as missing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_instances: Vec<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<PlanarScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Predictions>,
}

fn malformed(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

impl ViewManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| malformed(path, e))?;
        m.camera.validate().map_err(|e| malformed(path, e))?;
        m.pose_transform().map_err(|e| malformed(path, e))?;
        if let Some(link) = &m.pair {
            RigidTransform::from_row_major(&link.t_sn).map_err(|e| malformed(path, e))?;
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn pose_transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_row_major(&self.pose)
    }

    pub fn link_transform(&self) -> Result<Option<RigidTransform>> {
        self.pair.as_ref().map(|l| RigidTransform::from_row_major(&l.t_sn)).transpose()
    }
}

fn sibling(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(name)
}

/// Reads an FMAP referenced by name from the manifest at `manifest`.
pub fn read_map(manifest: &Path, name: &str) -> Result<Fmap> {
    let path = sibling(manifest, name);
    Fmap::read(&path).map_err(|e| match e {
        Error::Io(io) => malformed(&path, io),
        other => other,
    })
}

/// Loads a full view. The manifest must reference rgb and depth maps.
pub fn load_view(path: &Path) -> Result<(ViewManifest, RenderedView)> {
    let m = ViewManifest::read(path)?;
    let need = |f: &Option<String>, what: &str| f.clone().ok_or_else(|| malformed(path, format!("no {what} map")));
    let rgb = read_map(path, &need(&m.files.rgb, "rgb")?)?.to_vector_map()?;
    let depth = read_map(path, &need(&m.files.depth, "depth")?)?.to_scalar_map()?;
    let instances = read_map(path, &m.files.instances)?.to_instance_map()?;
    let plane_map = read_map(path, &m.files.planes)?.to_vector_map()?;
    let (h, w) = (m.camera.height, m.camera.width);
    let sizes = [(rgb.height, rgb.width), (depth.height, depth.width), (instances.height, instances.width)];
    if sizes.iter().any(|&s| s != (h, w)) || (plane_map.height, plane_map.width, plane_map.channels) != (h, w, 3) {
        return Err(malformed(path, "map sizes disagree with the camera"));
    }
    if rgb.channels != 3 {
        return Err(malformed(path, "rgb map must have 3 channels"));
    }
    let view = RenderedView {
        camera: m.camera,
        pose: m.pose_transform()?,
        rgb,
        depth,
        instances,
        plane_map,
        classes: m.classes.clone(),
    };
    Ok((m, view))
}

/// A pair read from its source manifest; `t_sn` and `t_ns` come from the links.
#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub sample: StereoSample,
    pub source: ViewManifest,
    pub neighbour: ViewManifest,
}

pub fn load_pair(source_path: &Path) -> Result<LoadedPair> {
    let (source, s) = load_view(source_path)?;
    let link = source.pair.clone().ok_or_else(|| malformed(source_path, "not part of a pair"))?;
    let n_path = sibling(source_path, &link.neighbour);
    let (neighbour, n) = load_view(&n_path)?;
    let t_sn = RigidTransform::from_row_major(&link.t_sn)?;
    let t_ns = match neighbour.link_transform()? {
        Some(t) => t,
        None => t_sn.inverse(),
    };
    Ok(LoadedPair { sample: StereoSample { source: s, neighbour: n, t_ns, t_sn }, source, neighbour })
}

/// Manifest paths in `dir`, sorted by file name.
pub fn list_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Source manifests of all pairs in `dir`.
pub fn list_pair_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in list_manifests(dir)? {
        if ViewManifest::read(&path)?.role == ViewRole::Source {
            out.push(path);
        }
    }
    Ok(out)
}

/// What to record alongside a rendered view.
#[derive(Debug, Clone, Default)]
pub struct ViewExtras<'a> {
    pub pair: Option<PairLink>,
    pub dropped_instances: Vec<u16>,
    pub scene: Option<&'a PlanarScene>,
}

/// Writes `<stem>.json` and `<stem>_{rgb,depth,instances,planes}.fmap` into `dir`.
pub fn write_view(dir: &Path, stem: &str, view: &RenderedView, role: ViewRole, extras: ViewExtras) -> Result<ViewManifest> {
    let files = MapFiles {
        rgb: Some(format!("{stem}_rgb.fmap")),
        depth: Some(format!("{stem}_depth.fmap")),
        instances: format!("{stem}_instances.fmap"),
        planes: format!("{stem}_planes.fmap"),
    };
    Fmap::from_vector_map(&view.rgb).write(&dir.join(files.rgb.as_ref().unwrap()))?;
    Fmap::from_scalar_map(&view.depth).write(&dir.join(files.depth.as_ref().unwrap()))?;
    Fmap::from_instance_map(&view.instances).write(&dir.join(&files.instances))?;
    Fmap::from_vector_map(&view.plane_map).write(&dir.join(&files.planes))?;
    let manifest = ViewManifest {
        camera: view.camera,
        pose: view.pose.to_row_major().to_vec(),
        files,
        classes: view.classes.clone(),
        role,
        pair: extras.pair,
        dropped_instances: extras.dropped_instances,
        scene: extras.scene.cloned(),
        predictions: None,
    };
    manifest.write(&dir.join(format!("{stem}.json")))?;
    Ok(manifest)
}

/// Writes both views of a pair as `<stem>_s` and `<stem>_n`, cross-linked.
/// Returns the source manifest path.
pub fn write_pair(
    dir: &Path,
    stem: &str,
    sample: &StereoSample,
    dropped_instances: Vec<u16>,
    scene: Option<&PlanarScene>,
) -> Result<PathBuf> {
    let (s, n) = (format!("{stem}_s"), format!("{stem}_n"));
    write_view(
        dir,
        &s,
        &sample.source,
        ViewRole::Source,
        ViewExtras {
            pair: Some(PairLink { neighbour: format!("{n}.json"), t_sn: sample.t_sn.to_row_major().to_vec() }),
            dropped_instances,
            scene,
        },
    )?;
    write_view(
        dir,
        &n,
        &sample.neighbour,
        ViewRole::Neighbour,
        ViewExtras {
            pair: Some(PairLink { neighbour: format!("{s}.json"), t_sn: sample.t_ns.to_row_major().to_vec() }),
            dropped_instances: Vec::new(),
            scene,
        },
    )?;
    Ok(dir.join(format!("{s}.json")))
}
