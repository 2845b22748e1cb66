//! Line-delimited trace files.
//!
//! Line 1 is a header `{event_id, frame_count, ground_truth?}`; every
//! following non-blank line is one `{frame_index, detections}` record.
//! Unknown fields are ignored on read and never written.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::trace_model::{validate_trace, EventTrace, FrameRecord, GroundTruth};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    event_id: String,
    frame_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruth>,
}

/// Reads one event from a line-delimited source and validates it.
pub fn parse_trace<R: BufRead>(source: R) -> Result<EventTrace, IngestError> {
    let mut header: Option<Header> = None;
    let mut frames = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match header {
            None => {
                let h: Header =
                    serde_json::from_str(&line).map_err(|source| IngestError::Parse {
                        line: line_no,
                        source,
                    })?;
                header = Some(h);
            }
            Some(_) => {
                let f: FrameRecord =
                    serde_json::from_str(&line).map_err(|source| IngestError::Parse {
                        line: line_no,
                        source,
                    })?;
                frames.push(f);
            }
        }
    }

    let header = header.ok_or(IngestError::MissingHeader)?;
    let trace = EventTrace {
        event_id: header.event_id,
        frame_count: header.frame_count,
        frames,
        ground_truth: header.ground_truth,
    };
    let violations = validate_trace(&trace);
    if violations.is_empty() {
        Ok(trace)
    } else {
        Err(IngestError::Invalid(violations))
    }
}

/// Convenience wrapper over [`parse_trace`] for in-memory text.
pub fn parse_trace_str(text: &str) -> Result<EventTrace, IngestError> {
    parse_trace(text.as_bytes())
}

/// Writes `trace` in the line-delimited format.
pub fn write_trace<W: Write>(trace: &EventTrace, mut sink: W) -> std::io::Result<()> {
    let header = Header {
        event_id: trace.event_id.clone(),
        frame_count: trace.frame_count,
        ground_truth: trace.ground_truth.clone(),
    };
    serde_json::to_writer(&mut sink, &header)?;
    sink.write_all(b"\n")?;
    for frame in &trace.frames {
        serde_json::to_writer(&mut sink, frame)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn encode_trace(trace: &EventTrace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::ObjectClass;

    const TWO_FRAMES: &str = r#"{"event_id":"e1","frame_count":2,"ground_truth":{"possible":true,"object_classes":["sphere"]}}
{"frame_index":0,"detections":[{"class":"sphere","confidence":0.6,"bbox":[10,20,30,30]}]}
{"frame_index":1,"detections":[]}
"#;

    #[test]
    fn parses_header_and_two_frames() {
        let t = parse_trace_str(TWO_FRAMES).unwrap();
        assert_eq!(t.event_id, "e1");
        assert_eq!(t.frame_count, 2);
        assert_eq!(t.frames.len(), 2);
        assert_eq!(t.frames[0].detections[0].class, ObjectClass::Sphere);
        assert_eq!(t.frames[0].detections[0].bbox.w, 30.0);
        assert!(t.frames[1].detections.is_empty());
        assert!(t.ground_truth.unwrap().possible);
    }

    #[test]
    fn unknown_fields_are_ignored_and_not_written() {
        let text = r#"{"event_id":"e","frame_count":1,"camera":"left"}
{"frame_index":0,"detections":[{"class":"cube","confidence":1,"bbox":[0,0,1,1],"track_hint":4}],"ts":12}
"#;
        let t = parse_trace_str(text).unwrap();
        let out = encode_trace(&t);
        assert!(!out.contains("camera"));
        assert!(!out.contains("track_hint"));
        assert!(!out.contains("ground_truth"));
    }

    #[test]
    fn duplicate_frame_index_is_a_validation_error() {
        let text = r#"{"event_id":"e","frame_count":2}
{"frame_index":0,"detections":[]}
{"frame_index":0,"detections":[]}
"#;
        match parse_trace_str(text) {
            Err(IngestError::Invalid(v)) => assert_eq!(v.len(), 1),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_record_names_line() {
        let text = "{\"event_id\":\"e\",\"frame_count\":2}\n{\"frame_index\":0,\"detections\":[]}\n{oops\n";
        match parse_trace_str(text) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_source_has_no_header() {
        assert!(matches!(
            parse_trace_str("\n\n"),
            Err(IngestError::MissingHeader)
        ));
    }

    #[test]
    fn frame_count_mismatch_rejected() {
        let text =
            "{\"event_id\":\"e\",\"frame_count\":3}\n{\"frame_index\":0,\"detections\":[]}\n";
        assert!(matches!(
            parse_trace_str(text),
            Err(IngestError::Invalid(_))
        ));
    }
}
