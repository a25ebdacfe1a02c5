//! Newline-delimited JSON messages exchanged with detector adapters.
//!
//! The adapter announces itself with `hello`, then answers each `detect`
//! request with exactly one `detections` or `error` message carrying the
//! request id.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Raster64;

use super::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        name: String,
        #[serde(default)]
        classes: Vec<String>,
    },
    Detect {
        id: u64,
        image_png_b64: String,
    },
    Detections {
        id: u64,
        detections: Vec<Detection>,
    },
    Error {
        /// Absent when the adapter could not read the request id.
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

impl Message {
    pub fn detect(id: u64, image: &Raster64) -> Result<Self> {
        Ok(Message::Detect {
            id,
            image_png_b64: STANDARD.encode(image.encode_png()?),
        })
    }

    /// One JSON object without a trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serialization is infallible")
    }

    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim()).map_err(|e| Error::Protocol {
            message: format!("malformed message: {e}"),
            raw: truncate(line),
        })
    }
}

/// Decodes the base64 PNG payload of a detect request.
pub fn decode_image(b64: &str) -> Result<Raster64> {
    let bytes = STANDARD.decode(b64.trim()).map_err(|e| Error::Protocol {
        message: format!("bad base64 image: {e}"),
        raw: truncate(b64),
    })?;
    Raster64::decode_png(&bytes)
}

/// Keeps raw payloads in error messages readable.
pub(crate) fn truncate(raw: &str) -> String {
    const LIMIT: usize = 512;
    if raw.len() <= LIMIT {
        return raw.to_string();
    }
    let mut end = LIMIT;
    while !raw.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}... ({} bytes)", &raw[..end], raw.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let hello = Message::parse(r#"{"type":"hello","name":"m","classes":["person"]}"#).unwrap();
        assert_eq!(
            hello,
            Message::Hello {
                name: "m".into(),
                classes: vec!["person".into()]
            }
        );
        let err = Message::Error {
            id: Some(4),
            message: "boom".into(),
        };
        assert_eq!(err.to_line(), r#"{"type":"error","id":4,"message":"boom"}"#);
        let dets = Message::Detections {
            id: 1,
            detections: vec![Detection::new(1.0, 2.0, 3.0, 4.0, 0.5)],
        };
        assert_eq!(
            dets.to_line(),
            r#"{"type":"detections","id":1,"detections":[{"x":1.0,"y":2.0,"w":3.0,"h":4.0,"objectness":0.5,"class_scores":null}]}"#
        );
    }

    #[test]
    fn image_round_trip() {
        let img = Raster64::from_fn(5, 4, 3, |x, y, px| {
            px.copy_from_slice(&[x as f64 / 4.0, y as f64 / 3.0, 0.5]);
        })
        .unwrap()
        .quantize_u8();
        let Message::Detect { id, image_png_b64 } = Message::detect(9, &img).unwrap() else {
            panic!()
        };
        assert_eq!(id, 9);
        assert_eq!(decode_image(&image_png_b64).unwrap(), img);
    }

    #[test]
    fn garbage_is_protocol_error_with_payload() {
        match Message::parse("not json") {
            Err(Error::Protocol { raw, .. }) => assert_eq!(raw, "not json"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Message::parse(r#"{"type":"nope"}"#), Err(Error::Protocol { .. })));
    }
}
