//! Output assembly. Every artifact carries the tool version and the resolved
//! configuration it ran under; floats serialize at a fixed 17 significant
//! digits so identical runs produce byte-identical files.

use std::io;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use serde_json::Value;

/// Pretty JSON whose floats always print as `d.dddddddddddddddde<exp>`:
/// 17 significant digits, enough to reproduce any f64 exactly.
struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Serializes any value with the fixed float encoding, trailing newline
/// included.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut bytes = Vec::new();
    let mut ser = Serializer::with_formatter(&mut bytes, FixedFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("report types serialize without error");
    bytes.push(b'\n');
    String::from_utf8(bytes).expect("serializer emits utf-8")
}

/// Common header wrapped around every command's result.
#[derive(Serialize)]
pub struct Envelope<R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Path of the `VFIELD_LAB_CONFIG` file that contributed defaults, if any.
    pub config_file: Option<String>,
    /// Resolved settings actually used, defaults filled in.
    pub config: Value,
    pub result: R,
}

pub fn envelope<R: Serialize>(
    command: &'static str,
    config_path: &Option<PathBuf>,
    config: Value,
    result: R,
) -> String {
    to_json_string(&Envelope {
        tool: "vfield",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_file: config_path.as_ref().map(|p| p.display().to_string()),
        config,
        result,
    })
}

/// CSV with a mandatory header line, `\n` endings, and `.` decimal marks.
/// Numbers use the shortest exact decimal form.
pub fn csv_document(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut doc = String::from(header);
    doc.push('\n');
    for row in rows {
        doc.push_str(&row);
        doc.push('\n');
    }
    doc
}
