#pragma once

// Umbrella header for the whole pipeline: corpus IO, windowed co-occurrence
// counting, PMI, relevance scores, masking schedules, example corruption,
// the tiny MLM encoder with its trainer, and cloze-probe evaluation.

#include "wmlm/common.hpp"
#include "wmlm/config.hpp"
#include "wmlm/cooccur.hpp"
#include "wmlm/corpus.hpp"
#include "wmlm/hash.hpp"
#include "wmlm/io_util.hpp"
#include "wmlm/loss.hpp"
#include "wmlm/masking.hpp"
#include "wmlm/matrix.hpp"
#include "wmlm/model.hpp"
#include "wmlm/pmi.hpp"
#include "wmlm/probe.hpp"
#include "wmlm/relevance.hpp"
#include "wmlm/rng.hpp"
#include "wmlm/schedule.hpp"
#include "wmlm/synth.hpp"
#include "wmlm/tokenizer.hpp"
#include "wmlm/trainer.hpp"
#include "wmlm/vocab.hpp"
