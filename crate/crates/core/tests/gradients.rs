mod common;

#[test]
fn mlp_backward_matches_finite_differences() {
    common::check_mlp_backward(100);
}

#[test]
fn critic_loss_gradient() {
    common::check_critic_loss(50);
}

#[test]
fn actor_objective_gradient() {
    common::check_actor_objective(50);
}

#[test]
fn temperature_gradient_in_log_alpha() {
    common::check_temperature(50);
}

#[test]
fn sql_temperature_gradient_with_frozen_policy() {
    common::check_sql_temperature(50);
}
