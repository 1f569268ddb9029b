#include "blocklin/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

namespace blocklin {

namespace detail {

struct PendingDispatch;

struct EventState {
    std::uint64_t id = 0;
    std::atomic<bool> complete {false};
    std::exception_ptr error;
    // guarded by DeviceImpl::mu_
    std::vector<std::shared_ptr<PendingDispatch>> dependents;
};

struct BufferState {
    std::uint64_t id = 0;
    ElementType type = ElementType::F64;
    std::size_t len = 0;
    std::size_t bytes = 0;
    std::vector<double> f64;
    std::vector<std::int32_t> i32;

    std::mutex stack_mu;
    EventList read_stack;
    EventList write_stack;

    ~BufferState();
};

struct PendingDispatch {
    KernelDispatch dispatch;
    const KernelDef* def = nullptr;
    std::shared_ptr<EventState> event;
    std::size_t remaining = 0;
    TraceRecord trace;
};

class DeviceImpl {
  public:
    explicit DeviceImpl(const DeviceOptions& options) : opts_(options) {
        start();
    }

    ~DeviceImpl() {
        stop();
    }

    Event enqueue(const KernelDispatch& d, const EventList& deps);
    Event make_complete_event();
    void wait(const EventState& e);
    void finish();
    void configure(const DeviceOptions& options);

    DeviceOptions options() const {
        std::lock_guard lk(mu_);
        return opts_;
    }

    std::shared_ptr<BufferState> allocate(std::size_t len, ElementType type);
    void release(std::size_t bytes) {
        mem_in_use_.fetch_sub(bytes);
    }
    std::size_t memory_in_use() const {
        return mem_in_use_.load();
    }

    void record_transfer(TransferDirection dir, const BufferState& b, std::size_t elements);

    std::vector<KernelProfile> profile() const {
        std::lock_guard lk(records_mu_);
        return profile_;
    }
    std::vector<TransferRecord> transfers() const {
        std::lock_guard lk(records_mu_);
        return transfers_;
    }
    std::vector<TraceRecord> trace() const {
        std::lock_guard lk(records_mu_);
        return trace_;
    }
    void clear_records() {
        std::lock_guard lk(records_mu_);
        profile_.clear();
        transfers_.clear();
        trace_.clear();
    }

    std::mutex& launch_mutex() {
        return launch_mu_;
    }

    static Event wrap(std::shared_ptr<EventState> s) {
        return Event(std::move(s));
    }
    static const std::shared_ptr<EventState>& unwrap(const Event& e) {
        return e.state_;
    }

  private:
    void start();
    void stop();
    void worker_loop();
    void run(PendingDispatch& p, std::uint64_t group_seed);
    void complete(const std::shared_ptr<PendingDispatch>& p);

    mutable std::mutex mu_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    std::deque<std::shared_ptr<PendingDispatch>> ready_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
    DeviceOptions opts_;
    std::mt19937_64 rng_;

    std::mutex launch_mu_;

    std::atomic<std::uint64_t> next_event_id_ {1};
    std::atomic<std::uint64_t> next_buffer_id_ {1};
    std::atomic<std::uint64_t> tick_ {1};
    std::atomic<std::size_t> mem_in_use_ {0};

    mutable std::mutex records_mu_;
    std::vector<KernelProfile> profile_;
    std::vector<TransferRecord> transfers_;
    std::vector<TraceRecord> trace_;
};

BufferState::~BufferState() {
    Device::instance().impl().release(bytes);
}

void DeviceImpl::start() {
    stopping_ = false;
    rng_.seed(opts_.shuffle_seed.value_or(0));
    const std::size_t n = std::max<std::size_t>(1, opts_.workers);
    workers_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        workers_.emplace_back([this] { worker_loop(); });
    }
}

void DeviceImpl::stop() {
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
    }
    work_cv_.notify_all();
    for (auto& t : workers_) {
        t.join();
    }
    workers_.clear();
}

void DeviceImpl::configure(const DeviceOptions& options) {
    finish();
    stop();
    opts_ = options;
    start();
}

std::shared_ptr<BufferState> DeviceImpl::allocate(std::size_t len, ElementType type) {
    const std::size_t elem = type == ElementType::F64 ? sizeof(double) : sizeof(std::int32_t);
    const std::size_t bytes = len * elem;
    const std::size_t cap = options().memory_cap_bytes;
    std::size_t used = mem_in_use_.load();
    do {
        if (bytes > cap || used > cap - bytes) {
            throw OutOfDeviceMemory("device allocation of " + std::to_string(bytes) + " bytes exceeds the "
                                    + std::to_string(cap) + " byte cap (" + std::to_string(used)
                                    + " in use)");
        }
    } while (!mem_in_use_.compare_exchange_weak(used, used + bytes));

    auto state = std::make_shared<BufferState>();
    state->id = next_buffer_id_.fetch_add(1);
    state->type = type;
    state->len = len;
    state->bytes = bytes;
    if (type == ElementType::F64) {
        state->f64.assign(len, 0.0);
    } else {
        state->i32.assign(len, 0);
    }
    return state;
}

void DeviceImpl::record_transfer(TransferDirection dir, const BufferState& b, std::size_t elements) {
    if (!options().profiling) {
        return;
    }
    const std::size_t elem = b.type == ElementType::F64 ? sizeof(double) : sizeof(std::int32_t);
    std::lock_guard lk(records_mu_);
    transfers_.push_back(TransferRecord {dir, b.id, elements, elements * elem});
}

Event DeviceImpl::make_complete_event() {
    auto s = std::make_shared<EventState>();
    s->id = next_event_id_.fetch_add(1);
    s->complete = true;
    return wrap(std::move(s));
}

namespace {

void validate(const KernelDispatch& d, const KernelDef& def) {
    if (d.args.size() != def.signature.size()) {
        throw KernelError("kernel '" + d.kernel_name + "': expected " + std::to_string(def.signature.size())
                          + " arguments, got " + std::to_string(d.args.size()));
    }
    for (std::size_t i = 0; i < d.args.size(); ++i) {
        const auto& a = d.args[i];
        if (a.kind != def.signature[i]) {
            throw KernelError("kernel '" + d.kernel_name + "': argument " + std::to_string(i) + " declared "
                              + to_string(def.signature[i]) + " but passed as " + to_string(a.kind));
        }
        const bool is_buffer = a.buffer() != nullptr;
        if (is_buffer != (a.kind != ArgKind::Scalar)) {
            throw KernelError("kernel '" + d.kernel_name + "': argument " + std::to_string(i)
                              + (is_buffer ? " is a buffer but declared scalar" : " is a scalar but declared a buffer"));
        }
        if (is_buffer && !a.buffer()->valid()) {
            throw KernelError("kernel '" + d.kernel_name + "': argument " + std::to_string(i) + " is a null buffer");
        }
    }
    for (std::size_t dim = 0; dim < 3; ++dim) {
        if (d.local[dim] == 0) {
            throw KernelError("kernel '" + d.kernel_name + "': work-group extent must be positive");
        }
    }
}

}  // namespace

Event DeviceImpl::enqueue(const KernelDispatch& d, const EventList& deps) {
    const KernelDef* def = find_kernel(d.kernel_name);
    if (def == nullptr) {
        throw KernelError("unknown kernel '" + d.kernel_name + "'");
    }
    validate(d, *def);

    auto p = std::make_shared<PendingDispatch>();
    p->dispatch = d;
    p->def = def;
    p->event = std::make_shared<EventState>();
    p->event->id = next_event_id_.fetch_add(1);

    const bool tracing = options().tracing;
    if (tracing) {
        p->trace.event_id = p->event->id;
        p->trace.kernel_name = d.kernel_name;
        for (const auto& a : d.args) {
            if (const DeviceBuffer* b = a.buffer()) {
                if (a.kind == ArgKind::In || a.kind == ArgKind::InOut) {
                    p->trace.reads.push_back(b->id());
                }
                if (a.kind == ArgKind::Out || a.kind == ArgKind::InOut) {
                    p->trace.writes.push_back(b->id());
                }
            }
        }
        for (const auto& e : deps) {
            if (e) {
                p->trace.deps.push_back(e.id());
            }
        }
    }

    {
        std::lock_guard lk(mu_);
        p->trace.enqueue_tick = tick_.fetch_add(1);
        for (const auto& e : deps) {
            const auto& s = unwrap(e);
            if (s && !s->complete.load()) {
                s->dependents.push_back(p);
                ++p->remaining;
            }
        }
        ++in_flight_;
        if (p->remaining == 0) {
            ready_.push_back(p);
            work_cv_.notify_one();
        }
    }
    return wrap(p->event);
}

void DeviceImpl::worker_loop() {
    for (;;) {
        std::shared_ptr<PendingDispatch> p;
        std::uint64_t group_seed = 0;
        {
            std::unique_lock lk(mu_);
            work_cv_.wait(lk, [&] { return stopping_ || !ready_.empty(); });
            if (ready_.empty()) {
                return;
            }
            std::size_t pick = 0;
            if (opts_.shuffle_seed) {
                pick = std::uniform_int_distribution<std::size_t>(0, ready_.size() - 1)(rng_);
                group_seed = rng_();
            }
            p = ready_[pick];
            ready_.erase(ready_.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        run(*p, group_seed);
        complete(p);
    }
}

void DeviceImpl::run(PendingDispatch& p, std::uint64_t group_seed) {
    const KernelDispatch& d = p.dispatch;
    std::array<std::size_t, 3> groups {};
    for (std::size_t dim = 0; dim < 3; ++dim) {
        groups[dim] = (d.global[dim] + d.local[dim] - 1) / d.local[dim];
    }
    const std::size_t total = groups[0] * groups[1] * groups[2];
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t {0});
    if (group_seed != 0) {
        std::mt19937_64 g(group_seed);
        std::shuffle(order.begin(), order.end(), g);
    }

    const auto t0 = std::chrono::steady_clock::now();
    p.trace.start_tick = tick_.fetch_add(1);
    try {
        KernelArgs args(d.args);
        for (std::size_t linear : order) {
            const std::array<std::size_t, 3> gid {linear % groups[0], (linear / groups[0]) % groups[1],
                                                  linear / (groups[0] * groups[1])};
            WorkGroup wg(d.global, d.local, gid);
            p.def->body(wg, args);
        }
    } catch (...) {
        p.event->error = std::current_exception();
    }
    p.trace.end_tick = tick_.fetch_add(1);
    const auto t1 = std::chrono::steady_clock::now();

    const DeviceOptions opts = options();
    if (opts.profiling || opts.tracing) {
        std::lock_guard lk(records_mu_);
        if (opts.profiling) {
            profile_.push_back(KernelProfile {d.kernel_name, p.event->id, d.global.total(),
                                              std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)});
        }
        if (opts.tracing) {
            trace_.push_back(p.trace);
        }
    }
}

void DeviceImpl::complete(const std::shared_ptr<PendingDispatch>& p) {
    // Drop buffer references before signalling completion so that memory
    // accounting is settled once finish() returns.
    p->dispatch.args.clear();
    {
        std::lock_guard lk(mu_);
        p->event->complete = true;
        for (auto& dep : p->event->dependents) {
            if (--dep->remaining == 0) {
                ready_.push_back(dep);
            }
        }
        p->event->dependents.clear();
        --in_flight_;
    }
    work_cv_.notify_all();
    done_cv_.notify_all();
}

void DeviceImpl::wait(const EventState& e) {
    if (!e.complete.load()) {
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [&] { return e.complete.load(); });
    }
    if (e.error) {
        std::rethrow_exception(e.error);
    }
}

void DeviceImpl::finish() {
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [&] { return in_flight_ == 0; });
}

}  // namespace detail

using detail::BufferState;
using detail::DeviceImpl;

namespace {

DeviceImpl& dev() {
    return Device::instance().impl();
}

std::unordered_map<std::string, KernelDef>& registry() {
    static std::unordered_map<std::string, KernelDef> r;
    return r;
}

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

void append_unique(EventList& out, const EventList& src) {
    for (const auto& e : src) {
        if (std::find(out.begin(), out.end(), e) == out.end()) {
            out.push_back(e);
        }
    }
}

void prune(EventList& stack) {
    std::erase_if(stack, [](const Event& e) { return e.is_complete(); });
}

}  // namespace

const char* to_string(ArgKind kind) {
    switch (kind) {
        case ArgKind::In:
            return "in";
        case ArgKind::Out:
            return "out";
        case ArgKind::InOut:
            return "in_out";
        case ArgKind::Scalar:
            return "scalar";
    }
    return "?";
}

std::uint64_t Event::id() const {
    return state_ ? state_->id : 0;
}

bool Event::is_complete() const {
    return !state_ || state_->complete.load();
}

void Event::wait() const {
    if (state_) {
        dev().wait(*state_);
    }
}

void wait_for(const EventList& events) {
    for (const auto& e : events) {
        e.wait();
    }
}

std::uint64_t DeviceBuffer::id() const {
    return state_ ? state_->id : 0;
}

std::size_t DeviceBuffer::size() const {
    return state_ ? state_->len : 0;
}

ElementType DeviceBuffer::type() const {
    return state_ ? state_->type : ElementType::F64;
}

EventList DeviceBuffer::read_events() const {
    std::lock_guard lk(state_->stack_mu);
    return state_->read_stack;
}

EventList DeviceBuffer::write_events() const {
    std::lock_guard lk(state_->stack_mu);
    return state_->write_stack;
}

namespace {

template<typename T>
std::vector<T> read_buffer(BufferState& s, const std::vector<T>& storage) {
    EventList pending;
    {
        std::lock_guard lk(s.stack_mu);
        pending = s.write_stack;
    }
    wait_for(pending);
    dev().record_transfer(TransferDirection::FromDevice, s, s.len);
    return storage;
}

template<typename T>
void write_buffer(BufferState& s, std::vector<T>& storage, std::span<const T> data) {
    if (data.size() != s.len) {
        throw std::invalid_argument("host write of " + std::to_string(data.size()) + " elements into a buffer of "
                                    + std::to_string(s.len));
    }
    std::lock_guard launch(dev().launch_mutex());
    EventList pending;
    {
        std::lock_guard lk(s.stack_mu);
        pending = s.read_stack;
        append_unique(pending, s.write_stack);
    }
    wait_for(pending);
    std::copy(data.begin(), data.end(), storage.begin());
    dev().record_transfer(TransferDirection::ToDevice, s, s.len);
    Event e = dev().make_complete_event();
    std::lock_guard lk(s.stack_mu);
    prune(s.read_stack);
    prune(s.write_stack);
    s.write_stack.push_back(e);
}

}  // namespace

std::vector<double> DeviceBuffer::read_f64() const {
    if (type() != ElementType::F64) {
        throw std::logic_error("read_f64 on an integer buffer");
    }
    return read_buffer(*state_, state_->f64);
}

std::vector<std::int32_t> DeviceBuffer::read_i32() const {
    if (type() != ElementType::I32) {
        throw std::logic_error("read_i32 on a floating-point buffer");
    }
    return read_buffer(*state_, state_->i32);
}

void DeviceBuffer::write(std::span<const double> data) {
    if (type() != ElementType::F64) {
        throw std::logic_error("writing doubles into an integer buffer");
    }
    write_buffer(*state_, state_->f64, data);
}

void DeviceBuffer::write(std::span<const std::int32_t> data) {
    if (type() != ElementType::I32) {
        throw std::logic_error("writing integers into a floating-point buffer");
    }
    write_buffer(*state_, state_->i32, data);
}

DeviceBuffer alloc_buffer(std::size_t len, ElementType type) {
    return DeviceBuffer(dev().allocate(len, type));
}

EventList collect_events(std::span<const KernelArg> args) {
    EventList out;
    for (const auto& a : args) {
        const DeviceBuffer* b = a.buffer();
        if (b == nullptr || !b->valid()) {
            continue;
        }
        auto& s = b->state();
        std::lock_guard lk(s.stack_mu);
        switch (a.kind) {
            case ArgKind::In:
                append_unique(out, s.write_stack);
                break;
            case ArgKind::Out:
            case ArgKind::InOut:
                append_unique(out, s.read_stack);
                append_unique(out, s.write_stack);
                break;
            case ArgKind::Scalar:
                break;
        }
    }
    return out;
}

void assign_event(const Event& e, std::span<const KernelArg> args) {
    for (const auto& a : args) {
        const DeviceBuffer* b = a.buffer();
        if (b == nullptr || !b->valid() || a.kind == ArgKind::Scalar) {
            continue;
        }
        auto& s = b->state();
        std::lock_guard lk(s.stack_mu);
        prune(s.read_stack);
        prune(s.write_stack);
        if (a.kind == ArgKind::In || a.kind == ArgKind::InOut) {
            s.read_stack.push_back(e);
        }
        if (a.kind == ArgKind::Out || a.kind == ArgKind::InOut) {
            s.write_stack.push_back(e);
        }
    }
}

const BufferState& KernelArgs::state(std::size_t i) const {
    const DeviceBuffer* b = args_[i].buffer();
    if (b == nullptr) {
        throw std::logic_error("kernel argument " + std::to_string(i) + " is not a buffer");
    }
    return b->state();
}

std::span<const double> KernelArgs::in(std::size_t i) const {
    const auto& s = state(i);
    return {s.f64.data(), s.f64.size()};
}

std::span<double> KernelArgs::out(std::size_t i) const {
    if (args_[i].kind == ArgKind::In) {
        throw std::logic_error("kernel argument " + std::to_string(i) + " is read-only");
    }
    auto& s = const_cast<BufferState&>(state(i));
    return {s.f64.data(), s.f64.size()};
}

std::span<const std::int32_t> KernelArgs::in_i32(std::size_t i) const {
    const auto& s = state(i);
    return {s.i32.data(), s.i32.size()};
}

std::span<std::int32_t> KernelArgs::out_i32(std::size_t i) const {
    if (args_[i].kind == ArgKind::In) {
        throw std::logic_error("kernel argument " + std::to_string(i) + " is read-only");
    }
    auto& s = const_cast<BufferState&>(state(i));
    return {s.i32.data(), s.i32.size()};
}

double KernelArgs::real(std::size_t i) const {
    const auto& v = std::get<ScalarValue>(args_[i].value);
    return std::holds_alternative<double>(v) ? std::get<double>(v) : static_cast<double>(std::get<std::int64_t>(v));
}

std::int64_t KernelArgs::integer(std::size_t i) const {
    const auto& v = std::get<ScalarValue>(args_[i].value);
    if (!std::holds_alternative<std::int64_t>(v)) {
        throw std::logic_error("kernel argument " + std::to_string(i) + " is not an integer");
    }
    return std::get<std::int64_t>(v);
}

WorkGroup::WorkGroup(const NDRange& global, const NDRange& local, std::array<std::size_t, 3> group_id)
    : global_(global.extent), local_(local.extent), group_id_(group_id) {}

std::size_t WorkGroup::active(std::size_t d) const {
    const std::size_t begin = global_offset(d);
    if (begin >= global_[d]) {
        return 0;
    }
    return std::min(local_[d], global_[d] - begin);
}

void register_kernel(KernelDef def) {
    std::lock_guard lk(registry_mutex());
    auto [it, inserted] = registry().emplace(def.name, def);
    if (!inserted) {
        throw std::logic_error("kernel '" + def.name + "' registered twice");
    }
}

const KernelDef* find_kernel(const std::string& name) {
    std::lock_guard lk(registry_mutex());
    auto it = registry().find(name);
    return it == registry().end() ? nullptr : &it->second;
}

Kernel::Kernel(std::string name, std::vector<ArgKind> signature, GroupBody body)
    : name_(std::move(name)), signature_(std::move(signature)) {
    register_kernel(KernelDef {name_, signature_, std::move(body)});
}

Kernel::Kernel(std::string name, std::vector<ArgKind> signature, ItemBody body)
    : Kernel(std::move(name), std::move(signature), GroupBody([f = std::move(body)](const WorkGroup& g, const KernelArgs& a) {
                 g.for_each_item([&](const WorkItem& item) { f(item, a); });
             })) {}

Event Kernel::launch(const KernelDispatch& d) {
    return Device::instance().launch(d);
}

DeviceOptions DeviceOptions::from_environment() {
    DeviceOptions o;
    o.workers = std::max(1u, std::thread::hardware_concurrency());
    if (const char* w = std::getenv("BLOCKLIN_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(w, &end, 10);
        if (end != w && *end == '\0' && v > 0) {
            o.workers = static_cast<std::size_t>(v);
        }
    }
    if (const char* p = std::getenv("BLOCKLIN_PROFILE")) {
        o.profiling = std::string(p) == "1";
    }
    return o;
}

Device::Device() : impl_(std::make_unique<DeviceImpl>(DeviceOptions::from_environment())) {}

Device::~Device() = default;

Device& Device::instance() {
    // Never destroyed: buffers released during static teardown still account
    // against it.
    static Device* device = new Device();
    return *device;
}

Event Device::enqueue(const KernelDispatch& d, const EventList& deps) {
    return impl_->enqueue(d, deps);
}

Event Device::launch(const KernelDispatch& d) {
    std::lock_guard lk(impl_->launch_mutex());
    const EventList deps = collect_events(d.args);
    Event e = impl_->enqueue(d, deps);
    assign_event(e, d.args);
    return e;
}

void Device::finish() {
    impl_->finish();
}

void Device::configure(const DeviceOptions& options) {
    impl_->configure(options);
}

DeviceOptions Device::options() const {
    return impl_->options();
}

std::size_t Device::memory_in_use() const {
    return impl_->memory_in_use();
}

std::vector<KernelProfile> Device::profile() const {
    return impl_->profile();
}

std::vector<TransferRecord> Device::transfers() const {
    return impl_->transfers();
}

std::vector<TraceRecord> Device::trace() const {
    return impl_->trace();
}

void Device::clear_records() {
    impl_->clear_records();
}

ScopedDeviceOptions::ScopedDeviceOptions(const DeviceOptions& options) : previous_(Device::instance().options()) {
    Device::instance().configure(options);
}

ScopedDeviceOptions::~ScopedDeviceOptions() {
    Device::instance().configure(previous_);
}

}  // namespace blocklin
