//! Notes, persona codes, and the bracketed note text format.
//!
//! A note record is five bracketed header fields followed by free text:
//!
//! ```text
//! [2023-08-14][19:45][Navy Pier, Chicago][iPhone 15][Clear skies, 32°C] I took a long walk…
//! ```
//!
//! Inside a header field `\]` is a literal `]` and `\\` a literal backslash.
//! The separator between the last `]` and the content is any run of
//! whitespace; the renderer always emits a single space.

use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

/// One of the 16 four-letter MBTI codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Persona {
    Istj,
    Isfj,
    Infj,
    Intj,
    Istp,
    Isfp,
    Infp,
    Intp,
    Estp,
    Esfp,
    Enfp,
    Entp,
    Estj,
    Esfj,
    Enfj,
    Entj,
}

pub const PERSONA_COUNT: usize = 16;

impl Persona {
    pub const ALL: [Persona; PERSONA_COUNT] = [
        Persona::Istj,
        Persona::Isfj,
        Persona::Infj,
        Persona::Intj,
        Persona::Istp,
        Persona::Isfp,
        Persona::Infp,
        Persona::Intp,
        Persona::Estp,
        Persona::Esfp,
        Persona::Enfp,
        Persona::Entp,
        Persona::Estj,
        Persona::Esfj,
        Persona::Enfj,
        Persona::Entj,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Persona::Istj => "ISTJ",
            Persona::Isfj => "ISFJ",
            Persona::Infj => "INFJ",
            Persona::Intj => "INTJ",
            Persona::Istp => "ISTP",
            Persona::Isfp => "ISFP",
            Persona::Infp => "INFP",
            Persona::Intp => "INTP",
            Persona::Estp => "ESTP",
            Persona::Esfp => "ESFP",
            Persona::Enfp => "ENFP",
            Persona::Entp => "ENTP",
            Persona::Estj => "ESTJ",
            Persona::Esfj => "ESFJ",
            Persona::Enfj => "ENFJ",
            Persona::Entj => "ENTJ",
        }
    }

    pub fn is_introvert(self) -> bool {
        self.as_str().starts_with('I')
    }

    pub fn is_intuitive(self) -> bool {
        self.as_str().as_bytes()[1] == b'N'
    }

    pub fn is_feeling(self) -> bool {
        self.as_str().as_bytes()[2] == b'F'
    }

    pub fn is_judging(self) -> bool {
        self.as_str().as_bytes()[3] == b'J'
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown persona {0:?}, expected one of the 16 MBTI codes")]
pub struct UnknownPersona(pub String);

impl FromStr for Persona {
    type Err = UnknownPersona;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Persona::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == upper)
            .ok_or_else(|| UnknownPersona(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoteId(pub String);

impl NoteId {
    pub fn new(id: impl Into<String>) -> Self {
        NoteId(id.into())
    }

    pub fn fresh() -> Self {
        NoteId(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Header field position within a note record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Date,
    Time,
    Location,
    Device,
    Weather,
    Content,
}

impl Field {
    const HEADER: [Field; 5] = [Field::Date, Field::Time, Field::Location, Field::Device, Field::Weather];
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Field::Date => "date",
            Field::Time => "time",
            Field::Location => "location",
            Field::Device => "device",
            Field::Weather => "weather",
            Field::Content => "content",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    /// The record ended before this bracketed field was found.
    MissingField,
    /// An opening `[` was never closed.
    Unterminated,
    InvalidDate,
    InvalidTime,
    /// Header field is empty or whitespace.
    EmptyField,
    EmptyContent,
    InvalidUtf8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{kind:?} in {field} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub field: Field,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(offset: usize, field: Field, kind: ParseErrorKind) -> Self {
        ParseError { offset, field, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NoteError {
    #[error("note content is empty")]
    EmptyContent,
    #[error("header field {0} is empty")]
    EmptyField(Field),
}

/// The five system-style metadata fields of a note.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NoteHeader {
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub location: String,
    pub device: String,
    pub weather: String,
}

impl NoteHeader {
    pub fn new(
        date: NaiveDate,
        time: NaiveTime,
        location: impl Into<String>,
        device: impl Into<String>,
        weather: impl Into<String>,
    ) -> Result<Self, NoteError> {
        // Seconds are not representable in the text format.
        let time = NaiveTime::from_hms_opt(time.hour(), time.minute(), 0).expect("valid hh:mm");
        let header = NoteHeader {
            date,
            time,
            location: location.into(),
            device: device.into(),
            weather: weather.into(),
        };
        for (field, value) in [
            (Field::Location, &header.location),
            (Field::Device, &header.device),
            (Field::Weather, &header.weather),
        ] {
            if value.trim().is_empty() {
                return Err(NoteError::EmptyField(field));
            }
        }
        Ok(header)
    }

    pub fn date_string(&self) -> String {
        self.date.format("%Y-%m-%d").to_string()
    }

    pub fn time_string(&self) -> String {
        self.time.format("%H:%M").to_string()
    }
}

/// A timestamped, persona-attributed note.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "NoteJson", into = "NoteJson")]
pub struct Note {
    pub id: NoteId,
    pub persona: Persona,
    pub header: NoteHeader,
    content: String,
}

impl Note {
    /// Leading whitespace of `content` is dropped so the text form round-trips.
    pub fn new(
        id: NoteId,
        persona: Persona,
        header: NoteHeader,
        content: impl Into<String>,
    ) -> Result<Self, NoteError> {
        let content = content.into();
        let content = content.trim_start();
        if content.trim().is_empty() {
            return Err(NoteError::EmptyContent);
        }
        Ok(Note {
            id,
            persona,
            header,
            content: content.to_string(),
        })
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    /// Sort key used for chronological listings.
    pub fn chrono_key(&self) -> (NaiveDate, NaiveTime, &NoteId) {
        (self.header.date, self.header.time, &self.id)
    }

    pub fn render(&self) -> String {
        render_note(self)
    }
}

#[derive(Serialize, Deserialize)]
struct NoteJson {
    id: NoteId,
    persona: Persona,
    date: String,
    time: String,
    location: String,
    device: String,
    weather: String,
    content: String,
}

impl TryFrom<NoteJson> for Note {
    type Error = String;

    fn try_from(j: NoteJson) -> Result<Self, Self::Error> {
        let date = parse_date(&j.date).ok_or_else(|| format!("invalid date {:?}", j.date))?;
        let time = parse_time(&j.time).ok_or_else(|| format!("invalid time {:?}", j.time))?;
        let header = NoteHeader::new(date, time, j.location, j.device, j.weather).map_err(|e| e.to_string())?;
        Note::new(j.id, j.persona, header, j.content).map_err(|e| e.to_string())
    }
}

impl From<Note> for NoteJson {
    fn from(n: Note) -> Self {
        NoteJson {
            date: n.header.date_string(),
            time: n.header.time_string(),
            id: n.id,
            persona: n.persona,
            location: n.header.location,
            device: n.header.device,
            weather: n.header.weather,
            content: n.content,
        }
    }
}

/// Strict `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        let part = &s[r];
        part.bytes()
            .all(|c| c.is_ascii_digit())
            .then(|| part.parse().ok())
            .flatten()
    };
    NaiveDate::from_ymd_opt(digits(0..4)? as i32, digits(5..7)?, digits(8..10)?)
}

/// Strict 24h `HH:MM`.
pub fn parse_time(s: &str) -> Option<NaiveTime> {
    let b = s.as_bytes();
    if b.len() != 5 || b[2] != b':' || !b[..2].iter().chain(&b[3..]).all(u8::is_ascii_digit) {
        return None;
    }
    NaiveTime::from_hms_opt(s[..2].parse().ok()?, s[3..].parse().ok()?, 0)
}

/// Parse a note record, assigning a fresh random id.
pub fn parse_note(raw: &str, persona: Persona) -> Result<Note, ParseError> {
    parse_note_with_id(raw, persona, NoteId::fresh())
}

/// Byte-level entry point; invalid UTF-8 is reported at the first bad byte.
pub fn parse_note_bytes(raw: &[u8], persona: Persona) -> Result<Note, ParseError> {
    match std::str::from_utf8(raw) {
        Ok(s) => parse_note(s, persona),
        Err(e) => {
            let offset = e.valid_up_to();
            // Attribute the error to whichever field the valid prefix reached.
            let field = match parse_header_fields(&raw_prefix(raw, offset)) {
                Ok(_) => Field::Content,
                Err(err) => err.field,
            };
            Err(ParseError::new(offset, field, ParseErrorKind::InvalidUtf8))
        }
    }
}

fn raw_prefix(raw: &[u8], len: usize) -> String {
    String::from_utf8_lossy(&raw[..len]).into_owned()
}

pub fn parse_note_with_id(raw: &str, persona: Persona, id: NoteId) -> Result<Note, ParseError> {
    let (fields, end) = parse_header_fields(raw)?;
    let [date_raw, time_raw, location, device, weather] = fields;

    let date = parse_date(&date_raw.value)
        .ok_or_else(|| ParseError::new(date_raw.offset, Field::Date, ParseErrorKind::InvalidDate))?;
    let time = parse_time(&time_raw.value)
        .ok_or_else(|| ParseError::new(time_raw.offset, Field::Time, ParseErrorKind::InvalidTime))?;
    for (field, f) in Field::HEADER[2..].iter().zip([&location, &device, &weather]) {
        if f.value.trim().is_empty() {
            return Err(ParseError::new(f.offset, *field, ParseErrorKind::EmptyField));
        }
    }

    let content = raw[end..].trim_start();
    if content.trim().is_empty() {
        return Err(ParseError::new(end, Field::Content, ParseErrorKind::EmptyContent));
    }

    let header = NoteHeader {
        date,
        time,
        location: location.value,
        device: device.value,
        weather: weather.value,
    };
    Ok(Note {
        id,
        persona,
        header,
        content: content.to_string(),
    })
}

struct RawField {
    /// Byte offset of the opening bracket.
    offset: usize,
    value: String,
}

/// Scan the five bracketed fields; returns them with the byte offset just
/// past the fifth `]`.
fn parse_header_fields(raw: &str) -> Result<([RawField; 5], usize), ParseError> {
    let bytes = raw.as_bytes();
    let mut pos = 0;
    let mut out: Vec<RawField> = Vec::with_capacity(5);
    for (i, field) in Field::HEADER.iter().enumerate() {
        // Blanks between consecutive fields are tolerated, not before the first.
        if i > 0 {
            while pos < bytes.len() && (bytes[pos] == b' ' || bytes[pos] == b'\t') {
                pos += 1;
            }
        }
        if pos >= bytes.len() || bytes[pos] != b'[' {
            return Err(ParseError::new(pos, *field, ParseErrorKind::MissingField));
        }
        let open = pos;
        pos += 1;
        let mut value = String::new();
        let mut closed = false;
        let mut chars = raw[pos..].char_indices();
        while let Some((rel, c)) = chars.next() {
            match c {
                '\\' => match raw[pos + rel + 1..].chars().next() {
                    Some(next @ (']' | '\\')) => {
                        value.push(next);
                        chars.next();
                    }
                    _ => value.push('\\'),
                },
                ']' => {
                    pos += rel + 1;
                    closed = true;
                    break;
                }
                _ => value.push(c),
            }
        }
        if !closed {
            return Err(ParseError::new(open, *field, ParseErrorKind::Unterminated));
        }
        out.push(RawField { offset: open, value });
    }
    let fields: [RawField; 5] = out.try_into().unwrap_or_else(|_| unreachable!());
    Ok((fields, pos))
}

fn escape_field(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        if c == ']' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Emit the canonical bracketed form of a note.
pub fn render_note(note: &Note) -> String {
    let h = &note.header;
    format!(
        "[{}][{}][{}][{}][{}] {}",
        h.date_string(),
        h.time_string(),
        escape_field(&h.location),
        escape_field(&h.device),
        escape_field(&h.weather),
        note.content
    )
}
