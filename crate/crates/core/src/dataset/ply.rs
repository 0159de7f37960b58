//! Class-colored ASCII PLY export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::lidar::LabeledPointCloud;

/// Class name to RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    colors: BTreeMap<String, [u8; 3]>,
}

impl Default for Colormap {
    /// other red, tractor green, combine harvester blue, trailer pink.
    fn default() -> Self {
        let colors = [
            ("other", [255, 0, 0]),
            ("tractor", [0, 255, 0]),
            ("combine", [0, 0, 255]),
            ("combine_harvester", [0, 0, 255]),
            ("trailer", [255, 105, 180]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Colormap { colors }
    }
}

impl Colormap {
    pub fn empty() -> Self {
        Colormap {
            colors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, class: impl Into<String>, rgb: [u8; 3]) {
        self.colors.insert(class.into(), rgb);
    }

    pub fn get(&self, class: &str) -> Option<[u8; 3]> {
        self.colors.get(class).copied()
    }

    fn color_of(&self, label: u16, class_names: &[String]) -> Result<[u8; 3]> {
        let name = class_names.get(label as usize).map(String::as_str).unwrap_or("<none>");
        self.get(name).ok_or_else(|| Error::UnknownColor {
            label,
            name: name.to_string(),
        })
    }
}

/// Writes `x y z red green blue` vertices, colored by `predictions` when
/// given and by the ground-truth labels otherwise.
pub fn export_ply(
    cloud: &LabeledPointCloud,
    predictions: Option<&[u16]>,
    colormap: &Colormap,
    path: &Path,
) -> Result<()> {
    export_combined_ply(&[(cloud, Pose::identity(), predictions)], colormap, path)
}

/// Writes several clouds into one PLY after moving each by its pose, e.g.
/// the frames of a registered sequence into the map frame.
pub fn export_combined_ply(
    parts: &[(&LabeledPointCloud, Pose, Option<&[u16]>)],
    colormap: &Colormap,
    path: &Path,
) -> Result<()> {
    let total: usize = parts.iter().map(|(c, _, _)| c.len()).sum();
    let mut out = String::with_capacity(64 * total + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {total}");
    out.push_str(
        "property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
    );
    for (cloud, pose, predictions) in parts {
        let labels = match predictions {
            Some(p) if p.len() != cloud.len() => {
                return Err(Error::Labels(format!(
                    "{} predictions for {} points",
                    p.len(),
                    cloud.len()
                )))
            }
            Some(p) => *p,
            None => &cloud.labels[..],
        };
        for (p, &label) in cloud.points.iter().zip(labels) {
            let [r, g, b] = colormap.color_of(label, &cloud.class_names)?;
            let q = pose.transform_point(p);
            let _ = writeln!(out, "{} {} {} {r} {g} {b}", q.x as f32, q.y as f32, q.z as f32);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cloud() -> LabeledPointCloud {
        let mut c = LabeledPointCloud::new(["other", "tractor", "combine"].map(String::from).to_vec());
        c.points = vec![Vec3::new(1.5, 0.0, -2.0), Vec3::new(0.0, 1.0, 0.0)];
        c.labels = vec![1, 0];
        c
    }

    fn body(path: &Path) -> Vec<String> {
        let text = std::fs::read_to_string(path).unwrap();
        let (_, body) = text.split_once("end_header\n").unwrap();
        body.lines().map(String::from).collect()
    }

    #[test]
    fn tractor_point_is_green() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        export_ply(&cloud(), None, &Colormap::default(), &path).unwrap();
        let lines = body(&path);
        assert_eq!(lines[0], "1.5 0 -2 0 255 0");
        assert!(lines[1].ends_with("255 0 0"));
        assert!(std::fs::read_to_string(&path).unwrap().contains("element vertex 2\n"));
    }

    #[test]
    fn predictions_drive_colors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        export_ply(&cloud(), Some(&[2, 2]), &Colormap::default(), &path).unwrap();
        assert!(body(&path).iter().all(|l| l.ends_with("0 0 255")));
        assert!(export_ply(&cloud(), Some(&[2]), &Colormap::default(), &path).is_err());
    }

    #[test]
    fn unknown_class_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cloud();
        c.class_names[1] = "harvester".into();
        let err = export_ply(&c, None, &Colormap::default(), &dir.path().join("c.ply")).unwrap_err();
        assert!(matches!(err, Error::UnknownColor { label: 1, .. }));
    }

    #[test]
    fn combined_export_applies_poses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let c = cloud();
        let shift = Pose::from_translation(Vec3::new(10.0, 0.0, 0.0));
        export_combined_ply(
            &[(&c, Pose::identity(), None), (&c, shift, None)],
            &Colormap::default(),
            &path,
        )
        .unwrap();
        let lines = body(&path);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "11.5 0 -2 0 255 0");
    }
}
