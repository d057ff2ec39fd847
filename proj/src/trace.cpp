#include "avisc/trace.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace avisc {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'T', 'R'};

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
        path_ = path;
    }

    void u32(uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 24)};
        raw(b, 4);
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f32s(const std::vector<float>& vs) {
        for (float v : vs) f32(v);
    }
    void bytes(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void u8(uint8_t v) { raw(&v, 1); }
    void magic(const char (&m)[4]) { raw(m, 4); }

    void finish() {
        out_.flush();
        if (!out_) throw std::runtime_error("write to '" + path_.string() + "' failed");
    }

private:
    void raw(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw std::runtime_error("write to '" + path_.string() + "' failed");
    }

    std::ofstream out_;
    std::filesystem::path path_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw std::runtime_error("cannot open trace '" + path.string() + "'");
    }

    uint32_t u32() {
        unsigned char b[4];
        raw(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    float f32() { return std::bit_cast<float>(u32()); }
    void f32s(std::vector<float>& dst, size_t n) {
        dst.resize(n);
        for (size_t i = 0; i < n; ++i) dst[i] = f32();
    }
    std::string str() {
        const uint32_t n = u32();
        if (n > (1u << 20)) fail("string length " + std::to_string(n) + " implausible");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    uint8_t u8() {
        unsigned char b;
        raw(&b, 1);
        return b;
    }

    size_t offset() const { return offset_; }
    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("trace '" + path_.string() + "': " + what + " (byte offset " +
                                 std::to_string(offset_) + ")");
    }

    void set_context(long step) { step_ = step; }

private:
    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n) {
            std::string where = step_ < 0 ? std::string("header")
                                          : "step record " + std::to_string(step_);
            if (step_ > 0) {
                where += " (last complete step " + std::to_string(step_ - 1) + ")";
            } else if (step_ == 0) {
                where += " (no complete steps)";
            }
            fail("truncated while reading " + where);
        }
        offset_ += n;
    }

    std::ifstream in_;
    std::filesystem::path path_;
    size_t offset_ = 0;
    long step_ = -1;
};

}  // namespace

void trace_write(const TraceFile& trace, const std::filesystem::path& path) {
    const auto& h = trace.header;
    Writer w(path);
    w.magic(kMagic);
    w.u32(h.version);
    w.bytes(h.model_name);
    w.u32(h.vocab_size);
    w.u32(h.image_tokens);
    w.u32(h.embed_dim);
    w.u32(h.layers);
    w.u32(h.heads);
    w.i32(h.eos_token);
    w.u8(h.has_biased_logits ? 1 : 0);
    w.u32(static_cast<uint32_t>(trace.steps.size()));

    for (size_t i = 0; i < trace.steps.size(); ++i) {
        const TraceStep& s = trace.steps[i];
        const size_t rows = static_cast<size_t>(h.layers) * h.heads;
        if (s.attention.size() != rows * s.key_count || s.logits.size() != h.vocab_size ||
            (h.has_biased_logits && s.biased_logits.size() != h.vocab_size) ||
            (!h.has_biased_logits && !s.biased_logits.empty()) || s.key_count < h.image_tokens) {
            throw std::invalid_argument("trace step " + std::to_string(i) +
                                        " is inconsistent with the header dimensions");
        }
        w.u32(s.step_index);
        w.u32(s.key_count);
        w.f32s(s.attention);
        w.f32s(s.logits);
        if (h.has_biased_logits) w.f32s(s.biased_logits);
        w.i32(s.chosen_token);
    }
    w.finish();
}

TraceFile trace_load(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic, not a trace file");

    TraceFile trace;
    TraceHeader& h = trace.header;
    h.version = r.u32();
    if (h.version != kTraceVersion) {
        throw std::runtime_error("trace '" + path.string() + "': unsupported version " +
                                 std::to_string(h.version) + " (this build reads version " +
                                 std::to_string(kTraceVersion) + ")");
    }
    h.model_name = r.str();
    h.vocab_size = r.u32();
    h.image_tokens = r.u32();
    h.embed_dim = r.u32();
    h.layers = r.u32();
    h.heads = r.u32();
    h.eos_token = r.i32();
    h.has_biased_logits = r.u8() != 0;
    const uint32_t step_count = r.u32();
    if (h.vocab_size == 0 || h.layers == 0 || h.heads == 0 || h.image_tokens == 0) {
        r.fail("header has zero dimensions");
    }

    trace.steps.resize(step_count);
    for (uint32_t i = 0; i < step_count; ++i) {
        r.set_context(static_cast<long>(i));
        TraceStep& s = trace.steps[i];
        s.step_index = r.u32();
        if (s.step_index != i) {
            r.fail("step record " + std::to_string(i) + " carries index " +
                   std::to_string(s.step_index) + ", expected contiguous from 0");
        }
        s.key_count = r.u32();
        if (s.key_count < h.image_tokens) {
            r.fail("step " + std::to_string(i) + " has fewer keys than image tokens");
        }
        r.f32s(s.attention, static_cast<size_t>(h.layers) * h.heads * s.key_count);
        r.f32s(s.logits, h.vocab_size);
        if (h.has_biased_logits) r.f32s(s.biased_logits, h.vocab_size);
        s.chosen_token = r.i32();
    }
    return trace;
}

TraceFile record_trace(Backend& backend, const VisualTokenSet& v, const QueryTokens& q,
                       const DecodeParams& params, std::string_view item_id) {
    const BackendCaps& caps = backend.caps();
    TraceFile trace;
    trace.header.model_name = backend.name();
    trace.header.vocab_size = static_cast<uint32_t>(caps.vocab_size);
    trace.header.image_tokens = static_cast<uint32_t>(caps.image_tokens);
    trace.header.embed_dim = static_cast<uint32_t>(caps.embed_dim);
    trace.header.layers = static_cast<uint32_t>(caps.layers);
    trace.header.heads = static_cast<uint32_t>(caps.heads);
    trace.header.eos_token = caps.eos_token;
    trace.header.has_biased_logits = params.method != DecodeMethod::Base;

    auto narrow = [](const std::vector<double>& xs) {
        std::vector<float> out(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) out[i] = static_cast<float>(xs[i]);
        return out;
    };

    decode(backend, v, q, params, item_id, [&](const StepObservation& obs) {
        TraceStep s;
        s.step_index = static_cast<uint32_t>(obs.step);
        s.key_count = static_cast<uint32_t>(obs.attention.keys);
        s.attention = narrow(obs.attention.weights);
        s.logits = narrow(obs.base_logits.values);
        if (trace.header.has_biased_logits) {
            s.biased_logits =
                narrow(obs.biased_logits ? obs.biased_logits->values : obs.base_logits.values);
        }
        s.chosen_token = obs.chosen;
        trace.steps.push_back(std::move(s));
    });
    return trace;
}

namespace {

class ReplaySession : public BackendSession {
public:
    explicit ReplaySession(std::shared_ptr<const TraceFile> trace) : trace_(std::move(trace)) {}

    StepOutput prime(const VisualTokenSet&, const QueryTokens&) override {
        if (trace_->steps.empty()) {
            throw std::runtime_error("trace has no recorded steps");
        }
        next_ = 0;
        return serve();
    }

    StepOutput step(TokenId) override {
        if (next_ >= trace_->steps.size()) {
            throw std::runtime_error("trace exhausted after " +
                                     std::to_string(trace_->steps.size()) + " recorded steps");
        }
        return serve();
    }

private:
    StepOutput serve() {
        const TraceHeader& h = trace_->header;
        const TraceStep& s = trace_->steps[next_++];
        StepOutput out;
        out.logits.values.assign(s.logits.begin(), s.logits.end());
        out.attention = AttentionSnapshot(h.layers, h.heads, s.key_count, h.image_tokens);
        out.attention.query_position = s.key_count - 1;
        std::copy(s.attention.begin(), s.attention.end(), out.attention.weights.begin());
        if (h.has_biased_logits) {
            LogitVector biased;
            biased.values.assign(s.biased_logits.begin(), s.biased_logits.end());
            out.recorded_biased = std::move(biased);
        }
        out.end_of_stream = next_ >= trace_->steps.size();
        return out;
    }

    std::shared_ptr<const TraceFile> trace_;
    size_t next_ = 0;
};

BackendCaps caps_from_header(const TraceHeader& h) {
    BackendCaps caps;
    caps.supports_biased_stream = h.has_biased_logits;
    caps.supports_mask_scheme = false;  // recorded attention cannot re-run position exclusion
    caps.concurrent_sessions = true;
    caps.eos_token = h.eos_token;
    caps.vocab_size = h.vocab_size;
    caps.image_tokens = h.image_tokens;
    caps.embed_dim = h.embed_dim;
    caps.layers = h.layers;
    caps.heads = h.heads;
    caps.max_context = 0;
    return caps;
}

}  // namespace

TraceBackend::TraceBackend(const std::filesystem::path& path) : path_(path) {
    if (std::filesystem::is_directory(path)) {
        directory_ = true;
        std::filesystem::path first;
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (entry.path().extension() != ".avtr") continue;
            if (first.empty() || entry.path() < first) first = entry.path();
        }
        if (first.empty()) {
            throw std::runtime_error("trace directory '" + path.string() +
                                     "' contains no .avtr files");
        }
        caps_ = caps_from_header(trace_load(first).header);
    } else {
        single_ = std::make_shared<const TraceFile>(trace_load(path));
        caps_ = caps_from_header(single_->header);
    }
}

std::shared_ptr<const TraceFile> TraceBackend::trace_for(std::string_view item_id) {
    if (!directory_) return single_;
    {
        std::lock_guard lock(cache_mutex_);
        auto it = cache_.find(item_id);
        if (it != cache_.end()) return it->second;
    }
    const auto file = path_ / (std::string(item_id) + ".avtr");
    auto loaded = std::make_shared<const TraceFile>(trace_load(file));
    if (caps_from_header(loaded->header).vocab_size != caps_.vocab_size ||
        loaded->header.layers != caps_.layers || loaded->header.heads != caps_.heads ||
        loaded->header.image_tokens != caps_.image_tokens) {
        throw std::runtime_error("trace '" + file.string() +
                                 "' has dimensions inconsistent with the rest of the directory");
    }
    std::lock_guard lock(cache_mutex_);
    return cache_.emplace(std::string(item_id), std::move(loaded)).first->second;
}

std::unique_ptr<BackendSession> TraceBackend::open_session(std::string_view item_id) {
    return std::make_unique<ReplaySession>(trace_for(item_id));
}

}  // namespace avisc
