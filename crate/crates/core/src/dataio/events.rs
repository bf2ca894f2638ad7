use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataError, KeyMap};

pub const EVENTS_HEADER: &str = "user_id\titem_id\ttimestamp";

/// One listening event with interned user and item indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InteractionEvent {
    pub user: u32,
    pub item: u32,
    /// Unix seconds.
    pub timestamp: i64,
}

/// Parsed events plus the key↔index maps built while reading them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<InteractionEvent>,
    pub users: KeyMap,
    pub items: KeyMap,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Reads an events TSV. The `user_id\titem_id\ttimestamp` header is optional;
/// line numbers in errors are 1-based physical lines.
pub fn parse_interactions(path: &Path) -> Result<EventLog, DataError> {
    let file = File::open(path).map_err(|e| DataError::file(path, e))?;
    parse_interactions_from(BufReader::new(file))
}

pub fn parse_interactions_from<R: BufRead>(reader: R) -> Result<EventLog, DataError> {
    let mut log = EventLog::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let line_no = i + 1;
        if line_no == 1 && line == EVENTS_HEADER {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(user), Some(item), Some(ts), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(DataError::MalformedLine { line: line_no });
        };
        if user.is_empty() || item.is_empty() {
            return Err(DataError::MalformedLine { line: line_no });
        }
        let timestamp: i64 = ts.trim().parse().map_err(|_| DataError::BadTimestamp {
            line: line_no,
            value: ts.to_owned(),
        })?;
        if timestamp < 0 {
            return Err(DataError::BadTimestamp {
                line: line_no,
                value: ts.to_owned(),
            });
        }
        let user = log.users.intern(user);
        let item = log.items.intern(item);
        log.events.push(InteractionEvent { user, item, timestamp });
    }
    if log.events.is_empty() {
        return Err(DataError::EmptyInput);
    }
    Ok(log)
}

/// Writes events with the standard header, resolving indices through the key maps.
pub fn write_interactions(path: &Path, log: &EventLog) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::file(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{EVENTS_HEADER}")?;
    for e in &log.events {
        writeln!(w, "{}\t{}\t{}", log.users.key(e.user), log.items.key(e.item), e.timestamp)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_events() {
        let log = parse_interactions_from("u1\ti1\t100\nu1\ti1\t200\nu2\ti1\t150\n".as_bytes()).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.users.len(), 2);
        assert_eq!(log.items.len(), 1);
        assert_eq!(log.events[2], InteractionEvent { user: 1, item: 0, timestamp: 150 });
    }

    #[test]
    fn header_is_skipped() {
        let text = format!("{EVENTS_HEADER}\nu1\ti1\t5\n");
        let log = parse_interactions_from(text.as_bytes()).unwrap();
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_interactions_from("".as_bytes()), Err(DataError::EmptyInput)));
        let header_only = format!("{EVENTS_HEADER}\n");
        assert!(matches!(
            parse_interactions_from(header_only.as_bytes()),
            Err(DataError::EmptyInput)
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_interactions_from("u1\ti1".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MalformedLine { line: 1 }));
        let err = parse_interactions_from("u1\ti1\t3\nu2\ti2\t4\textra\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MalformedLine { line: 2 }));
    }

    #[test]
    fn non_integer_timestamp() {
        let err = parse_interactions_from("u1\ti1\tnoon\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::BadTimestamp { line: 1, .. }));
        let err = parse_interactions_from("u1\ti1\t-4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::BadTimestamp { line: 1, .. }));
    }
}
