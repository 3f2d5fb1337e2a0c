#pragma once

#include "errors.hpp"
#include "utf8.hpp"
#include "autodiff.hpp"
#include "gradient_check.hpp"
#include "text.hpp"
#include "guard.hpp"
#include "corpus_io.hpp"
#include "aligner.hpp"
#include "synth.hpp"
#include "model.hpp"
#include "checkpoint.hpp"
#include "translate.hpp"
#include "evaluation.hpp"
#include "training.hpp"
#include "run_config.hpp"
#include "workflow.hpp"
#include "pipeline.hpp"
