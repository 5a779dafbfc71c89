#pragma once

#include "tracelens/error.hpp"
#include "tracelens/trace_model.hpp"
#include "tracelens/search_engine.hpp"
#include "tracelens/doc_generator.hpp"
#include "tracelens/line_annotator.hpp"
