//! `stormc plan`: resolve and print a parameter plan without running.

use std::path::Path;

use serde::Serialize;
use stormc_core::planner::ConditionReport;
use stormc_core::ParameterPlan;

use crate::config::{load_config, plan_condition};
use crate::{CliError, CliResult};

/// Machine-readable plan output.
#[derive(Serialize)]
struct PlanOutput<'a> {
    plan: &'a ParameterPlan,
    /// Feasibility report when problem constants were available.
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<&'a ConditionReport>,
    /// Total oracle calls the plan will spend.
    projected_ifo: u64,
    /// Pre-ceiling oracle-call total implied by the coefficients.
    symbolic_ifo: f64,
}

/// Resolves the plan of a config file and prints it, the feasibility
/// condition when constants are available, and the projected oracle cost.
pub fn cmd_plan(config_path: &Path, json: bool) -> CliResult<()> {
    let config = load_config(config_path)?;
    let problem = config.problem.build()?;
    let constants = config.resolve_constants(problem.as_ref())?;
    let plan = config.plan.resolve(constants.as_ref())?;
    let condition = plan_condition(&plan, constants.as_ref())?;

    if json {
        let output = PlanOutput {
            plan: &plan,
            condition: condition.as_ref(),
            projected_ifo: plan.ifo_total(),
            symbolic_ifo: plan.symbolic_ifo(),
        };
        let text = serde_json::to_string_pretty(&output)
            .map_err(|e| CliError::Config(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }

    let h = &plan.hyper;
    println!("mode:           {:?}", plan.mode);
    println!("eps:            {}", plan.eps);
    println!("eta:            {}", h.eta);
    println!("T:              {}", h.t_iters);
    println!(
        "momentum a:     g={}  jac={}  f={}",
        h.weights.a_g, h.weights.a_jac, h.weights.a_f
    );
    println!(
        "init S:         g={}  jac={}  f={}",
        h.init.s_g, h.init.s_jac, h.init.s_f
    );
    println!(
        "step B:         g={}  jac={}  f={}",
        h.steps.b_g, h.steps.b_jac, h.steps.b_f
    );
    println!("projected IFO:  {}", plan.ifo_total());
    println!("symbolic IFO:   {:.6e}", plan.symbolic_ifo());
    if let Some(k0) = plan.k0 {
        println!("K0:             {k0}");
    }
    match condition {
        Some(report) => {
            println!(
                "condition:      lhs={:.6} bound={:.6} -> {}",
                report.lhs,
                report.bound,
                if report.passes { "PASS" } else { "FAIL" }
            );
            for term in &report.terms {
                println!("  {:<18} {:.6}", term.label, term.value);
            }
        }
        None => println!("condition:      skipped (no problem constants available)"),
    }
    Ok(())
}
