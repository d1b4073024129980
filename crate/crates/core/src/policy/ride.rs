use crate::transit::DreamrState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RideDecision {
    Noop,
    Alight,
}

/// Stay aboard until the vehicle is at the planned alighting waypoint.
///
/// The vehicle is at the waypoint when it is the next one on the route and
/// its ETA falls inside the arrival window around `state.time`.
pub fn ride_action(state: &DreamrState, alight_seq: u32, window: f64) -> RideDecision {
    let Some(vehicle) = state.riding_vehicle() else {
        return RideDecision::Noop;
    };
    match vehicle.next_waypoint() {
        Some(w) if w.seq == alight_seq && w.eta < state.time + window => RideDecision::Alight,
        _ => RideDecision::Noop,
    }
}
