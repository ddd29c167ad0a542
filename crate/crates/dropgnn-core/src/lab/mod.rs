//! Theory-verification oracles: the two-cycles-versus-one counterexample
//! family and its exact dropout-equivalence check, port-number neighborhood
//! reconstruction, and the mean-aggregation separator and counterexample.

mod mean;
mod ports;
mod theorem3;

pub use mean::{
    mean_counterexample, mean_separator, MeanCounterexample, MeanSeparator, SeparatorOutcome,
};
pub use ports::{observe_port_dropouts, port_reconstruct, port_unfolding_tree, PortObservation, PortTree};
pub use theorem3::{
    dropout_equivalent, observation_set, theorem3_pair, DropoutObservationSet, EquivalenceReport,
};
