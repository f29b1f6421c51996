//! Report generation (placeholder).
pub struct ReportRow;
pub fn write_report() {}
pub fn render_bar_chart() {}
