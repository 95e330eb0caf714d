//! MOTChallenge files, CLEAR and IDF1 metrics, crowd-stratified MOTA and
//! flat key-value configuration files.

pub mod config;
pub mod metrics;
pub mod mot;

pub use config::{parse_tracker_config, tracker_config_string};
pub use metrics::{
    clear_metrics, crowd_mota, crowd_stratum, evaluate, idf1, ClearReport, CrowdMota, IdReport, MetricsReport,
};
pub use mot::{parse_mot, parse_mot_str, write_mot, write_mot_string, MotRow, RowKind};
