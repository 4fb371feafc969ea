//! Light rig calibration files.
//!
//! ```text
//! # one block per LED; positions in meters, camera frame
//! light
//!   position 0.065 0 0
//!   dir 0 0 1
//!   phi 1.0
//!   mu 0.5
//! ```
//!
//! `position`, `dir` (or `principal_dir`) and `phi` are required, `mu`
//! defaults to 0. `#` starts a comment. Keys may appear in any order within a
//! block.

use std::fmt::Write as _;
use std::path::Path;

use nfps_core::lighting::{LightRig, PointLight};
use nfps_core::Vec3;

use crate::error::{CliError, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct RigParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Default)]
struct Block {
    line: usize,
    position: Option<Vec3>,
    dir: Option<Vec3>,
    phi: Option<f64>,
    mu: Option<f64>,
}

impl Block {
    fn finish(self) -> Result<PointLight, RigParseError> {
        let missing = |key: &str| RigParseError {
            line: self.line,
            message: format!("light is missing `{key}`"),
        };
        let position = self.position.ok_or_else(|| missing("position"))?;
        let dir = self.dir.ok_or_else(|| missing("dir"))?;
        let phi = self.phi.ok_or_else(|| missing("phi"))?;
        PointLight::new(position, dir, phi, self.mu.unwrap_or(0.0)).map_err(|e| RigParseError {
            line: self.line,
            message: e.to_string(),
        })
    }
}

pub fn parse_rig(text: &str) -> Result<LightRig, RigParseError> {
    let mut lights = Vec::new();
    let mut current: Option<Block> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut words = content.split_whitespace();
        let Some(key) = words.next() else { continue };
        let err = |message: String| RigParseError { line, message };
        if key == "light" {
            if words.next().is_some() {
                return Err(err("`light` takes no arguments".into()));
            }
            if let Some(b) = current.take() {
                lights.push(b.finish()?);
            }
            current = Some(Block {
                line,
                ..Block::default()
            });
            continue;
        }
        let Some(block) = current.as_mut() else {
            return Err(err(format!("`{key}` outside a light block")));
        };
        let mut nums = Vec::new();
        for w in words {
            nums.push(w.parse::<f64>().map_err(|_| err(format!("invalid number {w:?}")))?);
        }
        let arity = match key {
            "position" | "dir" | "principal_dir" => 3,
            "phi" | "mu" => 1,
            _ => return Err(err(format!("unknown key `{key}`"))),
        };
        if nums.len() != arity {
            return Err(err(format!("`{key}` takes {arity} value(s), found {}", nums.len())));
        }
        let slot_taken = match key {
            "position" => block.position.replace(Vec3::new(nums[0], nums[1], nums[2])).is_some(),
            "dir" | "principal_dir" => block.dir.replace(Vec3::new(nums[0], nums[1], nums[2])).is_some(),
            "phi" => block.phi.replace(nums[0]).is_some(),
            _ => block.mu.replace(nums[0]).is_some(),
        };
        if slot_taken {
            return Err(err(format!("`{key}` given twice")));
        }
    }
    if let Some(b) = current {
        lights.push(b.finish()?);
    }
    LightRig::new(lights).map_err(|e| RigParseError {
        line: text.lines().count(),
        message: e.to_string(),
    })
}

/// Formats a rig so that [`parse_rig`] gives back the same values.
pub fn format_rig(rig: &LightRig) -> String {
    let mut out = String::new();
    for l in rig.lights() {
        let p = l.position;
        let d = l.principal_dir;
        let _ = writeln!(out, "light");
        let _ = writeln!(out, "  position {:?} {:?} {:?}", p.x, p.y, p.z);
        let _ = writeln!(out, "  dir {:?} {:?} {:?}", d.x, d.y, d.z);
        let _ = writeln!(out, "  phi {:?}", l.brightness);
        let _ = writeln!(out, "  mu {:?}", l.mu);
    }
    out
}

pub fn read_rig(path: &Path) -> Result<LightRig> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_rig(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        kind: "line",
        offset: e.line as u64,
        message: e.message,
    })
}

pub fn write_rig(path: &Path, rig: &LightRig) -> Result<()> {
    std::fs::write(path, format_rig(rig)).at(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfps_core::lighting::make_ring_rig;

    #[test]
    fn parses_documented_example() {
        let rig = parse_rig(
            "# comment\nlight\n  position 0.065 0 0\n  dir 0 0 1\n  phi 1.0\n  mu 0.5 # tail\n\nlight\n principal_dir 0 0 1\n phi 2\n position 0 0.065 0\nlight\n position 0 -0.065 0\n dir 0 0 1\n phi 1\n",
        )
        .unwrap();
        assert_eq!(rig.len(), 3);
        let l = rig.lights()[0];
        assert_eq!(l.position, Vec3::new(0.065, 0.0, 0.0));
        assert_eq!(l.mu, 0.5);
        assert_eq!(rig.lights()[1].mu, 0.0);
        assert_eq!(rig.lights()[1].brightness, 2.0);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("position 0 0 0\n", 1),
            ("light\n position 0 0\n", 2),
            ("light\n position 0 0 0\n dir 0 0 1\n", 1),
            ("light\n position 0 0 0\n dir 0 0 1\n phi 1\n color 1\n", 5),
            ("light\n position 0 0 0\n dir 0 0 1\n phi -1\n", 1),
            ("light\n position 0 0 0\n position 0 0 0\n", 3),
            ("light\n phi x\n", 2),
        ];
        for (text, line) in cases {
            let e = parse_rig(text).unwrap_err();
            assert_eq!(e.line, line, "{text:?}: {e}");
        }
        assert!(parse_rig("# nothing\n").is_err());
    }

    #[test]
    fn format_round_trips() {
        let rig = make_ring_rig(15, 0.065, 1.3, 0.7).unwrap();
        let back = parse_rig(&format_rig(&rig)).unwrap();
        assert_eq!(back.lights(), rig.lights());
    }
}
