#ifndef HOPTRAJ_H
#define HOPTRAJ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum HoptrajStatus {
  HOPTRAJ_STATUS_OK = 0,
  HOPTRAJ_STATUS_NULL_POINTER = 1,
  HOPTRAJ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Parameter file or JSON rejected.
   */
  HOPTRAJ_STATUS_PARAMS = 3,
  /**
   * Trajectory generation failed.
   */
  HOPTRAJ_STATUS_GENERATION = 4,
  /**
   * Time or index outside the trajectory.
   */
  HOPTRAJ_STATUS_DOMAIN = 5,
  /**
   * Flatness or attitude singularity.
   */
  HOPTRAJ_STATUS_SINGULARITY = 6,
  /**
   * A scenario run failed; partial output may exist.
   */
  HOPTRAJ_STATUS_SIMULATION = 7,
  HOPTRAJ_STATUS_IO = 8,
  HOPTRAJ_STATUS_PANIC = 99,
} HoptrajStatus;

/**
 * Robot parameters.
 */
typedef struct HoptrajParams HoptrajParams;

/**
 * One generated hop trajectory.
 */
typedef struct HoptrajTrajectory HoptrajTrajectory;

/**
 * Hop request. `td_position_mask` bit `i` marks `td_position[i]` as given;
 * unmarked axes follow the trajectory type's defaults.
 */
typedef struct HoptrajHopRequest {
  /**
   * Liftoff state `x y z vx vy vz φ θ ψ p q r`.
   */
  double lo_state[12];
  /**
   * 1, 2 or 3.
   */
  uint32_t trajectory_type;
  double td_position[3];
  uint32_t td_position_mask;
  /**
   * Touchdown ZYX Euler angles (rad).
   */
  double td_euler[3];
  double v_td;
  double t_m;
  double delta_t;
  bool drag_comp;
} HoptrajHopRequest;

/**
 * Desired state at one instant.
 */
typedef struct HoptrajDesired {
  double state[12];
  double accel[3];
  double ang_accel[3];
  double u1;
} HoptrajDesired;

/**
 * One control update.
 */
typedef struct HoptrajControl {
  /**
   * Applied `U1 U2 U3 U4` after saturation.
   */
  double input[4];
  /**
   * Control law before saturation.
   */
  double raw[4];
  double v;
  double v_dot_design;
  bool saturated;
} HoptrajControl;

/**
 * Outcome of a scenario run.
 */
typedef struct HoptrajRunSummary {
  uint32_t hops;
  uint32_t ticks;
  double rmse_pos;
  double rmse_vel;
} HoptrajRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. Empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *hoptraj_last_error(void);

/**
 * Library version as a static string.
 */
const char *hoptraj_version(void);

/**
 * The bundled nominal parameter set.
 */
enum HoptrajStatus hoptraj_params_nominal(struct HoptrajParams **params);

/**
 * Parameters from a JSON document.
 */
enum HoptrajStatus hoptraj_params_from_json(const char *json, struct HoptrajParams **params);

/**
 * Mass (kg) and maximum collective thrust (N).
 */
enum HoptrajStatus hoptraj_params_mass(const struct HoptrajParams *params,
                                       double *mass,
                                       double *max_thrust);

void hoptraj_params_free(struct HoptrajParams *params);

/**
 * Generates one hop trajectory.
 */
enum HoptrajStatus hoptraj_trajectory_generate(const struct HoptrajParams *params,
                                               const struct HoptrajHopRequest *request,
                                               struct HoptrajTrajectory **trajectory);

/**
 * Parses a trajectory from its JSON form.
 */
enum HoptrajStatus hoptraj_trajectory_from_json(const char *json,
                                                struct HoptrajTrajectory **trajectory);

void hoptraj_trajectory_free(struct HoptrajTrajectory *trajectory);

/**
 * Duration `t_m` of the trajectory (s).
 */
enum HoptrajStatus hoptraj_trajectory_duration(const struct HoptrajTrajectory *trajectory,
                                               double *duration);

/**
 * `k`-th derivative of flat output `output` (0 x, 1 y, 2 z, 3 ψ) at `t`.
 */
enum HoptrajStatus hoptraj_trajectory_evaluate(const struct HoptrajTrajectory *trajectory,
                                               double t,
                                               uint32_t output,
                                               uint32_t k,
                                               double *value);

/**
 * JSON form of the trajectory. Release with `hoptraj_string_free`.
 */
enum HoptrajStatus hoptraj_trajectory_to_json(const struct HoptrajTrajectory *trajectory,
                                              char **json);

void hoptraj_string_free(char *s);

/**
 * Desired state and feedforward thrust along the trajectory.
 */
enum HoptrajStatus hoptraj_trajectory_desired(const struct HoptrajParams *params,
                                              const struct HoptrajTrajectory *trajectory,
                                              double t,
                                              bool drag_comp,
                                              struct HoptrajDesired *desired);

/**
 * One control update tracking `trajectory` at `t` from `state` (12 doubles),
 * with the default gains.
 */
enum HoptrajStatus hoptraj_control(const struct HoptrajParams *params,
                                   const struct HoptrajTrajectory *trajectory,
                                   double t,
                                   bool drag_comp,
                                   const double *state,
                                   struct HoptrajControl *result);

/**
 * Advances `state` (12 doubles) by one RK4 step of length `dt` under
 * `input` (4 doubles), in place.
 */
enum HoptrajStatus hoptraj_dynamics_step(const struct HoptrajParams *params,
                                         double *state,
                                         const double *input,
                                         double dt);

/**
 * Runs a scenario file. `drag_comp` is 1 (on), 0 (off) or −1 (scenario
 * default). When `out_dir` is non-null the logs are written there, also
 * for a run that fails part way.
 */
enum HoptrajStatus hoptraj_run_scenario(const char *path,
                                        int32_t drag_comp,
                                        const char *out_dir,
                                        struct HoptrajRunSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOPTRAJ_H */
