#pragma once

#include "dcomp/adam.hpp"
#include "dcomp/compressors.hpp"
#include "dcomp/dtop.hpp"
#include "dcomp/embedding_store.hpp"
#include "dcomp/errors.hpp"
#include "dcomp/flat_index.hpp"
#include "dcomp/gradients.hpp"
#include "dcomp/hnsw.hpp"
#include "dcomp/latency.hpp"
#include "dcomp/linalg.hpp"
#include "dcomp/losses.hpp"
#include "dcomp/metrics.hpp"
#include "dcomp/qrels.hpp"
#include "dcomp/random.hpp"
#include "dcomp/run_file.hpp"
#include "dcomp/synth.hpp"
#include "dcomp/trainer.hpp"
