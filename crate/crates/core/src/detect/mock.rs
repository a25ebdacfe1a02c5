//! Scripted adapters for exercising the protocol client without a real
//! detector.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use crate::compose::{compose_scene, list_manifests, InjectOptions, SceneManifest};
use crate::error::{Error, Result};

use super::protocol::{decode_image, Message};
use super::Detection;

#[derive(Debug, Clone)]
pub enum MockMode {
    /// Answers every request with the same list.
    Fixed(Vec<Detection>),
    /// One detection with objectness 1.5.
    BadObjectness,
    /// Sleeps before answering with an empty list.
    Sleep(Duration),
    /// Exits without answering the first request.
    Crash,
    /// Answers with a line that is not JSON.
    Garbage,
    /// Answers with an error message.
    Refuse,
    /// Recognizes scenes of a dataset by their pixels and returns their
    /// ground truth at objectness 0.99.
    Replay(HashMap<Vec<u8>, Vec<Detection>>),
}

/// How a mock session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockExit {
    InputClosed,
    Crashed,
}

impl MockMode {
    /// Parses `<mode> [arg]` as given on the mock adapter's command line.
    pub fn from_args(args: &[String]) -> Result<Self> {
        let arg = |i: usize| {
            args.get(i)
                .ok_or_else(|| Error::Config(format!("mock mode {:?} needs an argument", args[0])))
        };
        match args.first().map(String::as_str) {
            Some("fixed") => {
                let text = arg(1)?;
                let dets = serde_json::from_str(text).map_err(|e| Error::json("fixed detections", e))?;
                Ok(MockMode::Fixed(dets))
            }
            Some("bad-objectness") => Ok(MockMode::BadObjectness),
            Some("sleep") => {
                let ms: u64 = arg(1)?
                    .parse()
                    .map_err(|e| Error::Config(format!("sleep milliseconds: {e}")))?;
                Ok(MockMode::Sleep(Duration::from_millis(ms)))
            }
            Some("crash") => Ok(MockMode::Crash),
            Some("garbage") => Ok(MockMode::Garbage),
            Some("refuse") => Ok(MockMode::Refuse),
            Some("replay") => Self::replay(Path::new(arg(1)?)),
            other => Err(Error::Config(format!(
                "unknown mock mode {other:?}; expected fixed, bad-objectness, sleep, crash, garbage, refuse or replay"
            ))),
        }
    }

    /// Indexes every scene of `dir` as it is sent to a detector: the
    /// composed image when the manifest names one, else the clean
    /// composite, quantized to 8 bits.
    pub fn replay(dir: &Path) -> Result<Self> {
        let mut table = HashMap::new();
        for path in list_manifests(dir)? {
            let manifest = SceneManifest::load(&path)?;
            let scene = manifest.load_assets(dir)?;
            let image = match scene.composed {
                Some(img) => img,
                None => {
                    compose_scene(
                        &scene.background,
                        &scene.regions,
                        None,
                        &scene.foregrounds,
                        &InjectOptions::default(),
                    )?
                    .image
                }
            };
            let dets = scene
                .ground_truth
                .iter()
                .map(|b| Detection::new(b.x, b.y, b.w, b.h, 0.99))
                .collect();
            table.insert(image.quantize_u8().to_bytes(), dets);
        }
        Ok(MockMode::Replay(table))
    }
}

/// Serves the protocol on `input`/`output` until input closes.
pub fn serve(mode: &MockMode, input: impl BufRead, mut output: impl Write) -> std::io::Result<MockExit> {
    let hello = Message::Hello {
        name: "mock".into(),
        classes: vec!["person".into()],
    };
    writeln!(output, "{}", hello.to_line())?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match Message::parse(&line) {
            Ok(Message::Detect { id, image_png_b64 }) => match mode {
                MockMode::Crash => return Ok(MockExit::Crashed),
                MockMode::Garbage => {
                    writeln!(output, "this is not json {{")?;
                    output.flush()?;
                    continue;
                }
                MockMode::Fixed(d) => detections(id, d.clone()),
                MockMode::BadObjectness => detections(id, vec![Detection::new(1.0, 1.0, 4.0, 8.0, 1.5)]),
                MockMode::Sleep(t) => {
                    std::thread::sleep(*t);
                    detections(id, Vec::new())
                }
                MockMode::Refuse => Message::Error {
                    id: Some(id),
                    message: "refused".into(),
                },
                MockMode::Replay(table) => match decode_image(&image_png_b64) {
                    Ok(img) => match table.get(&img.to_rgb().to_bytes()) {
                        Some(d) => detections(id, d.clone()),
                        None => Message::Error {
                            id: Some(id),
                            message: "unknown scene".into(),
                        },
                    },
                    Err(e) => Message::Error {
                        id: Some(id),
                        message: e.to_string(),
                    },
                },
            },
            Ok(_) => Message::Error {
                id: None,
                message: "expected a detect request".into(),
            },
            Err(e) => Message::Error {
                id: None,
                message: e.to_string(),
            },
        };
        writeln!(output, "{}", reply.to_line())?;
        output.flush()?;
    }
    Ok(MockExit::InputClosed)
}

fn detections(id: u64, detections: Vec<Detection>) -> Message {
    Message::Detections { id, detections }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Raster64;

    fn run(mode: &MockMode, requests: &[String]) -> Vec<Message> {
        let input = requests.join("\n");
        let mut out = Vec::new();
        serve(mode, input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| Message::parse(l).unwrap())
            .collect()
    }

    #[test]
    fn fixed_mode_echoes_list_with_ids() {
        let img = Raster64::solid(4, 4, &[0.5, 0.5, 0.5]).unwrap();
        let reqs: Vec<String> = (0..2).map(|i| Message::detect(i, &img).unwrap().to_line()).collect();
        let d = vec![Detection::new(1.0, 2.0, 3.0, 4.0, 0.7)];
        let out = run(&MockMode::Fixed(d.clone()), &reqs);
        assert!(matches!(out[0], Message::Hello { .. }));
        assert_eq!(out[1], Message::Detections { id: 0, detections: d.clone() });
        assert_eq!(out[2], Message::Detections { id: 1, detections: d });
    }

    #[test]
    fn malformed_request_gets_error_and_session_continues() {
        let img = Raster64::solid(2, 2, &[0.1, 0.2, 0.3]).unwrap();
        let reqs = vec!["{".to_string(), Message::detect(3, &img).unwrap().to_line()];
        let out = run(&MockMode::Fixed(Vec::new()), &reqs);
        assert!(matches!(out[1], Message::Error { id: None, .. }));
        assert_eq!(out[2], Message::Detections { id: 3, detections: Vec::new() });
    }

    #[test]
    fn parses_modes() {
        let a = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(matches!(MockMode::from_args(&a(&["sleep", "10"])).unwrap(), MockMode::Sleep(_)));
        assert!(MockMode::from_args(&a(&["sleep"])).is_err());
        assert!(MockMode::from_args(&a(&["bogus"])).is_err());
        match MockMode::from_args(&a(&["fixed", r#"[{"x":0,"y":0,"w":1,"h":1,"objectness":0.2}]"#])).unwrap() {
            MockMode::Fixed(d) => assert_eq!(d.len(), 1),
            m => panic!("{m:?}"),
        }
    }
}
