// Copyright 2026 The MicroSeg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MICROSEG_MICROSEG_H_
#define MICROSEG_MICROSEG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MS_API __declspec(dllexport)
#else
#define MS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every function that can fail returns one of these and, on
 * failure, leaves a message for ms_last_error() on the calling thread. */
typedef enum ms_status {
  MS_OK = 0,
  MS_ERR_INVALID_ARGUMENT = 1,
  MS_ERR_IO = 2,
  MS_ERR_FORMAT = 3,
  MS_ERR_SHAPE = 4,
  MS_ERR_PRECISION = 5,
  MS_ERR_NUMERIC = 6,
  MS_ERR_NOT_FOUND = 7,
  MS_ERR_EMPTY = 8,
  MS_ERR_INTERNAL = 9
} ms_status;

typedef struct ms_model ms_model;
typedef struct ms_dataset ms_dataset;

MS_API const char* ms_version(void);
MS_API const char* ms_status_name(ms_status status);
/* Message of the last failure on this thread; "" after a success. */
MS_API const char* ms_last_error(void);
/* Frees strings returned through char** out-parameters. */
MS_API void ms_string_free(char* s);

/* ---- architecture ---- */

typedef struct ms_arch {
  int depth;             /* 3, 4 or 5 */
  int scale_denominator; /* 1, 2, 4, 8 or 16 */
  int depthwise;         /* 0 standard, 1 depthwise separable */
  int input_h;
  int input_w;
  int input_c;
  int base_filters;
} ms_arch;

MS_API void ms_arch_default(ms_arch* arch);
MS_API ms_status ms_arch_validate(const ms_arch* arch);
/* Parses ids such as "d4_x1-4_dw". */
MS_API ms_status ms_arch_from_id(const char* id, ms_arch* arch);
/* JSON array of the grid configurations in canonical order. */
MS_API ms_status ms_grid_json(char** out_json);
/* Parameters, MACs, flash and peak activation bytes for both precisions,
 * with a per-layer breakdown. */
MS_API ms_status ms_estimate_json(const ms_arch* arch, char** out_json);

/* ---- models ---- */

typedef enum ms_precision { MS_FLOAT32 = 0, MS_INT8 = 1 } ms_precision;

MS_API ms_status ms_model_generate(const ms_arch* arch, uint64_t seed,
                                   ms_model** out);
MS_API ms_status ms_model_load(const char* path, ms_model** out);
MS_API ms_status ms_model_save(const ms_model* model, const char* path);
MS_API void ms_model_free(ms_model* model);
MS_API ms_status ms_model_precision(const ms_model* model, ms_precision* out);
MS_API ms_status ms_model_arch(const ms_model* model, ms_arch* out);
/* Config, precision and resource estimate as JSON. */
MS_API ms_status ms_model_info_json(const ms_model* model, char** out_json);

/* Runs n images of input_h x input_w x input_c floats in [0, 1] (NHWC) and
 * writes n * input_h * input_w crack probabilities. */
MS_API ms_status ms_model_predict(const ms_model* model, const float* images,
                                  size_t n, float* out_probs);

/* ---- datasets ---- */

typedef struct ms_load_options {
  int height;
  int width;
  int center_crop;
  int threads; /* 0 = automatic */
} ms_load_options;

MS_API void ms_load_options_default(ms_load_options* opts);
MS_API ms_status ms_dataset_load(const char* root, const ms_load_options* opts,
                                 ms_dataset** out);
MS_API ms_status ms_dataset_synth(size_t n, uint64_t seed, int height,
                                  int width, ms_dataset** out);
/* format is "png" or "pnm". */
MS_API ms_status ms_dataset_save(const ms_dataset* ds, const char* root,
                                 const char* format);
MS_API size_t ms_dataset_size(const ms_dataset* ds);
/* JSON array of loader warnings. */
MS_API ms_status ms_dataset_warnings_json(const ms_dataset* ds, char** out_json);
MS_API void ms_dataset_free(ms_dataset* ds);

/* ---- training ---- */

typedef struct ms_train_options {
  double learning_rate;
  int batch_size;
  int epochs;
  uint64_t seed;       /* shuffle order */
  uint64_t split_seed; /* 70/15/15 split */
  size_t train_limit;  /* 0 = whole training split */
  double threshold;
  int threads; /* 0 = automatic */
} ms_train_options;

typedef struct ms_epoch {
  int epoch;
  double train_loss;
  double val_loss;
  double val_f1;
  double val_miou;
} ms_epoch;

typedef void (*ms_epoch_callback)(const ms_epoch* epoch, void* user);

MS_API void ms_train_options_default(ms_train_options* opts);
/* Trains a float model on the training split and validates on the
 * validation split. out_best holds the best validation-F1 weights,
 * out_final (optional) the last epoch's weights, out_history_csv (optional)
 * the per-epoch history. */
MS_API ms_status ms_train(const ms_model* init, const ms_dataset* ds,
                          const ms_train_options* opts, ms_epoch_callback cb,
                          void* user, ms_model** out_best, ms_model** out_final,
                          char** out_history_csv);

/* ---- quantization ---- */

/* Calibrates on up to calibration_samples images of the validation split
 * (the whole dataset when the split is empty) and returns an int8 model.
 * out_report_json (optional) lists every edge's range and parameters. */
MS_API ms_status ms_quantize(const ms_model* float_model, const ms_dataset* ds,
                             size_t calibration_samples, uint64_t split_seed,
                             ms_model** out, char** out_report_json);

/* ---- evaluation ---- */

typedef enum ms_split { MS_SPLIT_TEST = 0, MS_SPLIT_VAL = 1, MS_SPLIT_TRAIN = 2,
                        MS_SPLIT_ALL = 3 } ms_split;

typedef struct ms_eval_options {
  ms_split split;
  uint64_t split_seed;
  double threshold;
  int macro; /* 0 micro (pooled counts), 1 mean of per-image metrics */
  int threads;
} ms_eval_options;

MS_API void ms_eval_options_default(ms_eval_options* opts);
/* Metrics record with config, precision and resource columns as JSON;
 * out_per_image_csv (optional) holds "image,tp,fp,fn,tn" rows. */
MS_API ms_status ms_evaluate(const ms_model* model, const ms_dataset* ds,
                             const ms_eval_options* opts, char** out_json,
                             char** out_per_image_csv);

/* ---- inference on image files ---- */

/* Reads a PNG/PGM/PPM image, resizes it (or center-crops it) to the model
 * input and writes a PPM with predicted crack pixels blended in red and a
 * binary PGM mask. Either output path may be NULL. */
MS_API ms_status ms_infer_file(const ms_model* model, const char* image_path,
                               int center_crop, double threshold,
                               const char* overlay_path, const char* mask_path);

/* ---- sweep ---- */

typedef struct ms_sweep_options {
  const char* configs; /* comma-separated ids, NULL or "" = full grid */
  ms_train_options train;
  int skip_train;
  size_t calibration_samples;
} ms_sweep_options;

MS_API void ms_sweep_options_default(ms_sweep_options* opts);
/* ds may be NULL when skip_train is set. */
MS_API ms_status ms_sweep(const ms_dataset* ds, const ms_sweep_options* opts,
                          char** out_csv, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* MICROSEG_MICROSEG_H_ */
