//! Edit propagation: re-optimize a fitted field against edited frames.

pub mod color;
pub mod editors;
pub mod external;
pub mod schedule;
pub mod stage;

pub use editors::{builtin_editor, BuiltinEditor, EditRequest, FrameEditor, NoiseCorruption, PixelRect};
pub use external::{restore_precision, serve_echo, ExchangeRequest, ExternalEditor};
pub use schedule::{strength, EditSchedule, ScheduleShape};
pub use stage::{
    edit_adam_defaults, edit_step, field_edit, field_edit_with_progress, EditConfig, EditReport, EditSession, FramePolicy, PseudoGt,
    SkippedEdit,
};
