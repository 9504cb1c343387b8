//! Built-in fixed-step simulator for flat ODE models: explicit Euler with
//! when/reinit event handling at step boundaries. Exists so the full
//! pipeline runs hermetically without an external Modelica compiler.

use std::collections::HashMap;

use super::expr::{eval, parse_expr, Env, Expr};
use super::{
    BackendError, BackendSession, Diagnostic, OutputVars, SimSettings, Trajectory,
    ValidationStage,
};
use crate::frontend::{parse_unit, Component, Equation, WhenAction};

struct StatePlan {
    state: String,
    derivative: Expr,
}

struct AlgebraicPlan {
    target: String,
    rhs: Expr,
}

struct ReinitPlan {
    target: String,
    expr: Expr,
}

struct WhenPlan {
    condition: Expr,
    reinits: Vec<ReinitPlan>,
}

struct Plan {
    initial: HashMap<String, f64>,
    states: Vec<StatePlan>,
    algebraics: Vec<AlgebraicPlan>,
    whens: Vec<WhenPlan>,
    /// Emission order: declared variables.
    outputs: Vec<String>,
}

fn unsupported(description: impl Into<String>) -> Vec<Diagnostic> {
    vec![Diagnostic::error(
        ValidationStage::Check,
        format!("unsupported construct: {}", description.into()),
    )]
}

/// Static analysis: verify the component fits the micro subset and compile
/// its equations into an executable plan.
fn build_plan(component: &Component) -> Result<Plan, Vec<Diagnostic>> {
    if !component.instantiations.is_empty() {
        return Err(unsupported(format!(
            "component '{}' instantiates '{}'; only flat models are simulatable",
            component.name, component.instantiations[0].instance_name
        )));
    }
    if !component.extends_clauses.is_empty() {
        return Err(unsupported(format!(
            "component '{}' extends '{}'",
            component.name, component.extends_clauses[0]
        )));
    }
    if !component.connects.is_empty() {
        return Err(unsupported("connect statements"));
    }

    let mut initial: HashMap<String, f64> = HashMap::new();

    // Constants then parameters, in declaration order; later entries may
    // reference earlier ones.
    for param in component.constants.iter().chain(&component.parameters) {
        let text = param.default.as_deref().or(param.start_value.as_deref()).unwrap_or("0");
        let expr = parse_expr(text)
            .map_err(|e| unsupported(format!("parameter '{}' binding: {e}", param.name)))?;
        let value = eval(&expr, &Env { values: &initial, pre: None })
            .map_err(|e| unsupported(format!("parameter '{}' binding: {e}", param.name)))?;
        initial.insert(param.name.clone(), value);
    }

    let mut outputs = Vec::new();
    for variable in &component.variables {
        if variable.type_name != "Real" && variable.type_name != "Boolean" {
            return Err(unsupported(format!(
                "variable '{}' of type {}; only Real and Boolean are simulatable",
                variable.name, variable.type_name
            )));
        }
        let start = match variable.start_value.as_deref() {
            Some(text) => {
                let expr = parse_expr(text).map_err(|e| {
                    unsupported(format!("start value of '{}': {e}", variable.name))
                })?;
                eval(&expr, &Env { values: &initial, pre: None }).map_err(|e| {
                    unsupported(format!("start value of '{}': {e}", variable.name))
                })?
            }
            None => 0.0,
        };
        initial.insert(variable.name.clone(), start);
        outputs.push(variable.name.clone());
    }

    let mut states = Vec::new();
    let mut algebraics = Vec::new();
    let mut whens = Vec::new();
    for equation in &component.equations {
        match equation {
            Equation::Derivative { state, rhs, .. } => {
                if !initial.contains_key(state) {
                    return Err(unsupported(format!("der() of undeclared variable '{state}'")));
                }
                if states.iter().any(|s: &StatePlan| &s.state == state) {
                    return Err(unsupported(format!("multiple derivative equations for '{state}'")));
                }
                let derivative = parse_expr(rhs)
                    .map_err(|e| unsupported(format!("der({state}) right-hand side: {e}")))?;
                states.push(StatePlan { state: state.clone(), derivative });
            }
            Equation::Simple { text } => {
                let (lhs, rhs) = match text.split_once('=') {
                    Some(pair) => pair,
                    None => return Err(unsupported(format!("equation '{text}'"))),
                };
                let target = lhs.trim();
                if !target.chars().all(|c| c.is_alphanumeric() || c == '_')
                    || !initial.contains_key(target)
                {
                    return Err(unsupported(format!(
                        "equation '{text}': left-hand side must be a declared variable"
                    )));
                }
                let rhs = parse_expr(rhs)
                    .map_err(|e| unsupported(format!("equation '{text}': {e}")))?;
                algebraics.push(AlgebraicPlan { target: target.to_string(), rhs });
            }
            Equation::When { condition, body, .. } => {
                let condition = parse_expr(condition)
                    .map_err(|e| unsupported(format!("when condition: {e}")))?;
                let mut reinits = Vec::new();
                for action in body {
                    match action {
                        WhenAction::Reinit { target, expr } => {
                            if !initial.contains_key(target.as_str()) {
                                return Err(unsupported(format!(
                                    "reinit of undeclared variable '{target}'"
                                )));
                            }
                            let expr = parse_expr(expr)
                                .map_err(|e| unsupported(format!("reinit expression: {e}")))?;
                            reinits.push(ReinitPlan { target: target.clone(), expr });
                        }
                        WhenAction::Assign { lhs, .. } => {
                            return Err(unsupported(format!(
                                "assignment to '{lhs}' inside when; only reinit is supported"
                            )));
                        }
                        WhenAction::Other(text) => {
                            return Err(unsupported(format!("when action '{text}'")));
                        }
                    }
                }
                whens.push(WhenPlan { condition, reinits });
            }
        }
    }

    let algebraic_targets: Vec<&str> = algebraics.iter().map(|a| a.target.as_str()).collect();
    for (i, target) in algebraic_targets.iter().enumerate() {
        if algebraic_targets[..i].contains(target) {
            return Err(unsupported(format!("multiple equations define '{target}'")));
        }
        if states.iter().any(|s| s.state == *target) {
            return Err(unsupported(format!("'{target}' has both der() and algebraic equations")));
        }
    }

    // Every referenced identifier must be a declared parameter or variable.
    let mut referenced = Vec::new();
    for state in &states {
        collect_vars(&state.derivative, &mut referenced);
    }
    for algebraic in &algebraics {
        collect_vars(&algebraic.rhs, &mut referenced);
    }
    for when in &whens {
        collect_vars(&when.condition, &mut referenced);
        for reinit in &when.reinits {
            collect_vars(&reinit.expr, &mut referenced);
        }
    }
    for name in referenced {
        if !initial.contains_key(&name) {
            return Err(unsupported(format!("reference to undeclared identifier '{name}'")));
        }
    }

    Ok(Plan { initial, states, algebraics, whens, outputs })
}

fn collect_vars(expr: &Expr, out: &mut Vec<String>) {
    match expr {
        Expr::Var(name) | Expr::Pre(name) => out.push(name.clone()),
        Expr::Neg(inner) | Expr::Call(_, inner) => collect_vars(inner, out),
        Expr::Bin(_, lhs, rhs) => {
            collect_vars(lhs, out);
            collect_vars(rhs, out);
        }
        Expr::Number(_) | Expr::Bool(_) => {}
    }
}

fn truthy(v: f64) -> bool {
    v > 0.5
}

/// Simulate a flat component with explicit Euler from t=0 to `stop_time` at
/// fixed step `step`. Emits one trajectory per declared variable sampled at
/// every step including t=0. Events fire on a false-to-true edge of a when
/// condition at a step boundary; reinit sees `pre(v)` as the pre-event value.
pub fn micro_simulate(
    component: &Component,
    settings: &SimSettings,
) -> Result<Vec<Trajectory>, Vec<Diagnostic>> {
    if settings.stop_time <= 0.0 || settings.step <= 0.0 {
        return Err(vec![Diagnostic::error(
            ValidationStage::Simulate,
            "stop_time and step must be positive",
        )]);
    }
    let plan = build_plan(component)?;
    let h = settings.step;
    // Mathematical floor(stop/h): tolerate representation error in stop/h.
    let steps = ((settings.stop_time / h) + 1e-9).floor() as usize;

    let mut values = plan.initial.clone();
    let eval_at = |expr: &Expr, values: &HashMap<String, f64>| -> Result<f64, Vec<Diagnostic>> {
        eval(expr, &Env { values, pre: None }).map_err(|e| {
            vec![Diagnostic::error(ValidationStage::Simulate, format!("evaluation failed: {e}"))]
        })
    };

    // t = 0: algebraics, then baseline values of the when conditions (a
    // condition already true at start is not an edge).
    for algebraic in &plan.algebraics {
        let v = eval_at(&algebraic.rhs, &values)?;
        values.insert(algebraic.target.clone(), v);
    }
    let mut condition_state: Vec<bool> = plan
        .whens
        .iter()
        .map(|w| eval_at(&w.condition, &values).map(truthy))
        .collect::<Result<_, _>>()?;

    let mut times = Vec::with_capacity(steps + 1);
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); plan.outputs.len()];
    let record = |values: &HashMap<String, f64>,
                      times: &mut Vec<f64>,
                      series: &mut Vec<Vec<f64>>,
                      t: f64|
     -> Result<(), Vec<Diagnostic>> {
        times.push(t);
        for (output, column) in plan.outputs.iter().zip(series.iter_mut()) {
            let v = values[output];
            if !v.is_finite() {
                return Err(vec![Diagnostic::error(
                    ValidationStage::Simulate,
                    format!("numeric error: '{output}' is not finite at t={t}"),
                )]);
            }
            column.push(v);
        }
        Ok(())
    };
    record(&values, &mut times, &mut series, 0.0)?;

    for i in 1..=steps {
        let t = i as f64 * h;

        // Derivatives from the previous step's values, then advance.
        let mut derivatives = Vec::with_capacity(plan.states.len());
        for state in &plan.states {
            derivatives.push(eval_at(&state.derivative, &values)?);
        }
        for (state, derivative) in plan.states.iter().zip(derivatives) {
            *values.get_mut(&state.state).unwrap() += h * derivative;
        }

        for algebraic in &plan.algebraics {
            let v = eval_at(&algebraic.rhs, &values)?;
            values.insert(algebraic.target.clone(), v);
        }

        // Event pass: each false->true edge executes its reinits with pre()
        // bound to the pre-event snapshot.
        let mut fired = false;
        let snapshot = values.clone();
        for (when, previous) in plan.whens.iter().zip(condition_state.iter_mut()) {
            let now = truthy(eval_at(&when.condition, &values)?);
            if now && !*previous {
                for reinit in &when.reinits {
                    let v = eval(&reinit.expr, &Env { values: &values, pre: Some(&snapshot) })
                        .map_err(|e| {
                            vec![Diagnostic::error(
                                ValidationStage::Simulate,
                                format!("reinit failed: {e}"),
                            )]
                        })?;
                    values.insert(reinit.target.clone(), v);
                }
                fired = true;
            }
            *previous = now;
        }
        if fired {
            for algebraic in &plan.algebraics {
                let v = eval_at(&algebraic.rhs, &values)?;
                values.insert(algebraic.target.clone(), v);
            }
        }

        record(&values, &mut times, &mut series, t)?;
    }

    let mut trajectories: Vec<Trajectory> = plan
        .outputs
        .iter()
        .zip(series)
        .map(|(name, values)| Trajectory { variable: name.clone(), times: times.clone(), values })
        .collect();
    if let OutputVars::Named(names) = &settings.output_variables {
        trajectories.retain(|t| names.contains(&t.variable));
    }
    Ok(trajectories)
}

/// Session wrapper: load parses, check runs the static plan, simulate runs
/// the integrator.
pub struct MicroSession {
    loaded: HashMap<String, Component>,
}

/// A fresh micro-backend session.
pub fn micro_backend() -> MicroSession {
    MicroSession { loaded: HashMap::new() }
}

impl BackendSession for MicroSession {
    fn load_code(&mut self, code: &str) -> Result<(), BackendError> {
        match parse_unit(code) {
            Ok(components) if components.is_empty() => {
                Err(BackendError::single(ValidationStage::Load, "no class definitions found"))
            }
            Ok(components) => {
                for component in components {
                    self.loaded.insert(component.name.clone(), component);
                }
                Ok(())
            }
            Err(e) => {
                // A previously loaded model of the same name must not answer
                // for a failed reload.
                if let Some(name) = crate::frontend::first_class_name(code) {
                    self.loaded.remove(&name);
                }
                let mut diagnostic = Diagnostic::error(ValidationStage::Load, e.to_string());
                if let Some((line, column)) = e.position() {
                    diagnostic.line = Some(line);
                    diagnostic.column = Some(column);
                }
                Err(BackendError::Diagnostics(vec![diagnostic]))
            }
        }
    }

    fn load_library(&mut self, name: &str) -> Result<(), BackendError> {
        // The micro backend simulates flat models only; library loads are
        // accepted and ignored.
        log::debug!("micro backend ignoring load_library({name})");
        Ok(())
    }

    fn check(&mut self, model_name: &str) -> Result<(), BackendError> {
        match self.loaded.get(model_name) {
            Some(component) => build_plan(component).map(|_| ()).map_err(BackendError::Diagnostics),
            None => Err(BackendError::single(
                ValidationStage::Check,
                format!("model '{model_name}' is not loaded"),
            )),
        }
    }

    fn simulate(
        &mut self,
        model_name: &str,
        settings: &SimSettings,
    ) -> Result<Vec<Trajectory>, BackendError> {
        match self.loaded.get(model_name) {
            Some(component) => {
                micro_simulate(component, settings).map_err(BackendError::Diagnostics)
            }
            None => Err(BackendError::single(
                ValidationStage::Simulate,
                format!("model '{model_name}' is not loaded"),
            )),
        }
    }

    fn dispose(&mut self) {
        self.loaded.clear();
    }
}
