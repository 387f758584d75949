pub mod batch_fit;
pub mod evaluate;
pub mod simulate;
pub mod track;

pub use batch_fit::cmd_batch_fit;
pub use evaluate::cmd_evaluate;
pub use simulate::cmd_simulate;
pub use track::cmd_track;
