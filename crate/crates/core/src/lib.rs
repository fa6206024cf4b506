//! Regional traffic-signal control lab.
//!
//! * [`net`]: road-network graph, phases, lanes, road-net files.
//! * [`partition`]: exact minimum dominating set and star-region construction.
//! * [`sim`]: queue-based signalized traffic simulator.
//! * [`neural`]: branching dueling Q-network with hand-written backprop and Adam.
//! * [`agent`]: adaptive branching agent, replay memory, targets, learning step.
//! * [`harness`]: training/evaluation pipeline, baseline controllers, logs.

pub mod agent;
pub mod harness;
pub mod net;
pub mod neural;
pub mod partition;
pub mod sim;
